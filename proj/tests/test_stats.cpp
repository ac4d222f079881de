#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mbmon/stats.hpp"

using namespace mbmon;

namespace {

Eigen::MatrixXd random_gaussian(int rows, int cols, std::uint64_t seed, double stdev = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, stdev);
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            m(r, c) = dist(rng);
        }
    }
    return m;
}

CusumConfig config_for(int d, double k, int streams, CusumForm form = CusumForm::paper) {
    CusumConfig cfg;
    cfg.d = d;
    cfg.k = k;
    cfg.form = form;
    cfg.finalize(streams);
    return cfg;
}

// Independent step-by-step reference of the recursion, plain loops only.
struct ReferenceCusum {
    std::vector<double> s0p, s1p, s0m, s1m;
    int d;
    double k;

    explicit ReferenceCusum(int d_, double k_)
        : s0p(static_cast<std::size_t>(d_ - 1), 0.0),
          s1p(s0p),
          s0m(s0p),
          s1m(s0p),
          d(d_),
          k(k_) {}

    static double side(std::vector<double>& s0, std::vector<double>& s1,
                       const std::vector<double>& a, const std::vector<double>& e, double k) {
        const std::size_t n = a.size();
        double c = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
            const double u = a[l] - e[l] + s0[l] - s1[l];
            const double v = s0[l] + s1[l] - e[l] + a[l];
            const double den = std::max(e[l] + s1[l], 1e-12);
            c += u * v / den;
        }
        if (c <= k) {
            std::fill(s0.begin(), s0.end(), 0.0);
            std::fill(s1.begin(), s1.end(), 0.0);
            return 0.0;
        }
        const double shrink = (c - k) / c;
        for (std::size_t l = 0; l < n; ++l) {
            s0[l] = (s0[l] + a[l]) * shrink;
            s1[l] = (s1[l] + e[l]) * shrink;
        }
        return c - k;
    }

    // One-hot cell -> W_x
    double step(int cell) {
        std::vector<double> a_minus(static_cast<std::size_t>(d - 1), 0.0);
        for (int l = 0; l < d - 1; ++l) {
            a_minus[static_cast<std::size_t>(l)] = (cell <= l) ? 1.0 : 0.0;
        }
        std::vector<double> a_plus(static_cast<std::size_t>(d - 1));
        std::vector<double> e_plus(static_cast<std::size_t>(d - 1));
        std::vector<double> e_minus(static_cast<std::size_t>(d - 1));
        for (int l = 0; l < d - 1; ++l) {
            a_plus[static_cast<std::size_t>(l)] = 1.0 - a_minus[static_cast<std::size_t>(l)];
            e_minus[static_cast<std::size_t>(l)] = static_cast<double>(l + 1) / d;
            e_plus[static_cast<std::size_t>(l)] = 1.0 - e_minus[static_cast<std::size_t>(l)];
        }
        const double wp = side(s0p, s1p, a_plus, e_plus, k);
        const double wm = side(s0m, s1m, a_minus, e_minus, k);
        return std::max(wp, wm);
    }
};

}  // namespace

TEST_CASE("fit_t2: identity-covariance codes invert to (about) identity") {
    Eigen::MatrixXd codes = random_gaussian(500, 3, 42);
    // Exactly whiten so the population covariance is the identity.
    Eigen::RowVectorXd mean = codes.colwise().mean();
    codes.rowwise() -= mean;
    Eigen::MatrixXd cov = codes.transpose() * codes / 500.0;
    Eigen::MatrixXd root = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov)
                               .operatorInverseSqrt();
    codes = codes * root;
    const auto model = fit_t2(codes);
    CHECK((model.precision - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-6);
}

TEST_CASE("fit_t2: one-dimensional variance 4 gives precision 0.25") {
    Eigen::MatrixXd codes = random_gaussian(4000, 1, 10, 2.0);
    const auto model = fit_t2(codes);
    CHECK(model.precision(0, 0) == doctest::Approx(1.0 / model.covariance(0, 0)));
    CHECK(model.precision(0, 0) == doctest::Approx(0.25).epsilon(0.1));
}

TEST_CASE("fit_t2: multiply-back residual below 1e-6") {
    const Eigen::MatrixXd codes = random_gaussian(300, 5, 77);
    const auto model = fit_t2(codes);
    CHECK((model.precision * model.covariance - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-6);
}

TEST_CASE("fit_t2: rank precondition") {
    CHECK_THROWS_AS(fit_t2(random_gaussian(3, 5, 1)), DataError);
}

TEST_CASE("t2_score: zero code scores zero, identity covariance gives squared norm") {
    T2Model model;
    model.covariance = Eigen::MatrixXd::Identity(2, 2);
    model.precision = Eigen::MatrixXd::Identity(2, 2);
    CHECK(t2_score(model, Eigen::VectorXd::Zero(2)) == 0.0);
    Eigen::VectorXd c(2);
    c << 3, 4;
    CHECK(t2_score(model, c) == doctest::Approx(25.0));
}

TEST_CASE("t2_score: agrees with an explicit quadratic-form loop within 1e-12") {
    const Eigen::MatrixXd codes = random_gaussian(200, 4, 3);
    const auto model = fit_t2(codes);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd c(4);
        for (int i = 0; i < 4; ++i) {
            c[i] = dist(rng);
        }
        double expected = 0.0;
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                expected += c[i] * model.precision(i, j) * c[j];
            }
        }
        CHECK(std::abs(t2_score(model, c) - expected) < 1e-12);
        CHECK(t2_score(model, c) >= 0.0);
    }
}

TEST_CASE("kde_limit: uniform sample at confidence 0.99 brackets the empirical quantile") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXd scores(10000);
    for (int i = 0; i < 10000; ++i) {
        scores[i] = dist(rng);
    }
    const auto res = kde_limit(scores, 0.99);
    CHECK_FALSE(res.degenerate);
    // Empirical-quantile oracle; edge smoothing shifts the KDE quantile past
    // the data max by roughly half a bandwidth, so the bracket is +-2 bw.
    std::vector<double> sorted(scores.data(), scores.data() + scores.size());
    std::sort(sorted.begin(), sorted.end());
    const double q99 = sorted[static_cast<std::size_t>(std::ceil(0.99 * 10000)) - 1];
    const double sd = std::sqrt((scores.array() - scores.mean()).square().mean());
    const double bw = 1.06 * sd * std::pow(10000.0, -0.2);
    CHECK(std::abs(res.limit - q99) < 2.0 * bw);
    CHECK(res.limit > 0.97);
    CHECK(res.limit < 1.05);
}

TEST_CASE("kde_limit: confidence 0.5 on a symmetric sample sits near the median") {
    Eigen::VectorXd scores = random_gaussian(2000, 1, 55).col(0).array() + 5.0;
    const auto res = kde_limit(scores, 0.5);
    std::vector<double> sorted(scores.data(), scores.data() + scores.size());
    std::sort(sorted.begin(), sorted.end());
    const double median = 0.5 * (sorted[999] + sorted[1000]);
    const double sd = std::sqrt((scores.array() - scores.mean()).square().mean());
    const double bw = 1.06 * sd * std::pow(2000.0, -0.2);
    CHECK(std::abs(res.limit - median) < 2.0 * bw);
}

TEST_CASE("kde_limit: constant scores return the value with a degeneracy flag") {
    Eigen::VectorXd scores = Eigen::VectorXd::Constant(80, 7.0);
    const auto res = kde_limit(scores, 0.99);
    CHECK(res.degenerate);
    CHECK(res.limit == 7.0);
}

TEST_CASE("kde_limit: monotone in confidence and needs 50 scores") {
    const Eigen::VectorXd scores = random_gaussian(400, 1, 8).col(0);
    double prev = -1e300;
    for (double conf : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
        const double limit = kde_limit(scores, conf).limit;
        CHECK(limit > prev);
        prev = limit;
    }
    CHECK_THROWS_AS(kde_limit(random_gaussian(49, 1, 1).col(0), 0.9), DataError);
}

TEST_CASE("fit_quantile_grid: 1..8 with d=4 cuts at 2.5, 4.5, 6.5") {
    Eigen::MatrixXd calib(40, 1);
    for (int i = 0; i < 40; ++i) {
        calib(i, 0) = static_cast<double>(i % 8) + 1.0;  // repeats 1..8 five times
    }
    const auto grid = fit_quantile_grid(calib, 4);
    CHECK(grid.cuts[0][0] == doctest::Approx(2.5));
    CHECK(grid.cuts[0][1] == doctest::Approx(4.5));
    CHECK(grid.cuts[0][2] == doctest::Approx(6.5));
    // Sort-and-count oracle: exactly 10 of 40 points per cell.
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
    for (int i = 0; i < 40; ++i) {
        counts += categorize(grid, calib(i, 0), 0);
    }
    for (int l = 0; l < 4; ++l) {
        CHECK(counts[l] == doctest::Approx(10.0));
    }
}

TEST_CASE("fit_quantile_grid: d=2 cut is the median") {
    const Eigen::MatrixXd calib = random_gaussian(501, 1, 31);
    const auto grid = fit_quantile_grid(calib, 2);
    std::vector<double> sorted(calib.data(), calib.data() + calib.size());
    std::sort(sorted.begin(), sorted.end());
    CHECK(grid.cuts[0][0] == doctest::Approx(sorted[250]));  // ceil(501/2) order statistic
}

TEST_CASE("fit_quantile_grid: tied data is rejected as degenerate") {
    Eigen::MatrixXd calib = Eigen::MatrixXd::Zero(100, 1);
    CHECK_THROWS_AS(fit_quantile_grid(calib, 4), DataError);
    CHECK_THROWS_AS(fit_quantile_grid(random_gaussian(30, 1, 2), 4), DataError);  // too short
}

TEST_CASE("fit_quantile_grid: occupancy invariant on random calibration sets") {
    std::mt19937_64 rng(64);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 200 + static_cast<int>(rng() % 800);
        const int d = 2 + static_cast<int>(rng() % 6);
        const Eigen::MatrixXd calib = random_gaussian(n, 2, rng());
        const auto grid = fit_quantile_grid(calib, d);
        for (int x = 0; x < 2; ++x) {
            Eigen::VectorXd counts = Eigen::VectorXd::Zero(d);
            for (int i = 0; i < n; ++i) {
                counts += categorize(grid, calib(i, x), x);
            }
            for (int l = 0; l < d; ++l) {
                CHECK(std::abs(counts[l] / n - 1.0 / d) <= 2.0 / std::sqrt(n));
            }
        }
    }
}

TEST_CASE("categorize: end cells and the tie-breaks-down convention") {
    QuantileGrid grid;
    grid.d = 4;
    Eigen::VectorXd cuts(3);
    cuts << -1.0, 0.0, 1.0;
    grid.cuts = {cuts};
    Eigen::VectorXd y = categorize(grid, -5.0, 0);
    CHECK(y[0] == 1.0);
    CHECK(y.sum() == 1.0);
    y = categorize(grid, 5.0, 0);
    CHECK(y[3] == 1.0);
    y = categorize(grid, 0.0, 0);  // exactly on a cut: lower cell
    CHECK(y[1] == 1.0);
    y = categorize(grid, -1.0, 0);
    CHECK(y[0] == 1.0);
}

TEST_CASE("accumulate_a: cumulative sums and complements") {
    Eigen::VectorXd y(4);
    y << 0, 0, 1, 0;
    auto [a_plus, a_minus] = accumulate_a(y);
    CHECK(a_minus.isApprox(Eigen::Vector3d(0, 0, 1)));
    CHECK(a_plus.isApprox(Eigen::Vector3d(1, 1, 0)));
    y << 1, 0, 0, 0;
    std::tie(a_plus, a_minus) = accumulate_a(y);
    CHECK(a_minus.isApprox(Eigen::Vector3d(1, 1, 1)));
    CHECK(a_plus.norm() == 0.0);
    y << 1, 0, 1, 0;
    CHECK_THROWS_AS(accumulate_a(y), DataError);
}

TEST_CASE("accumulate_a: in-control expectation matches 1 - l/d by Monte Carlo") {
    const int n = 4000;
    const int d = 5;
    const Eigen::MatrixXd calib = random_gaussian(n, 1, 71);
    const auto grid = fit_quantile_grid(calib, d);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d - 1);
    for (int i = 0; i < n; ++i) {
        auto [a_plus, a_minus] = accumulate_a(categorize(grid, calib(i, 0), 0));
        acc += a_plus;
    }
    acc /= static_cast<double>(n);
    for (int l = 1; l <= d - 1; ++l) {
        CHECK(std::abs(acc[l - 1] - (1.0 - static_cast<double>(l) / d)) <= 2.0 / std::sqrt(n));
    }
}

TEST_CASE("cusum_update: feeding the expectation is an exact fixed point") {
    const auto cfg = config_for(5, 0.1, 1);
    CusumState state = CusumState::zero(1, 5);
    for (int t = 0; t < 1000; ++t) {
        const double w =
            cusum_update(state.streams[0], cfg.e_plus, cfg.e_minus, cfg);
        CHECK(w == 0.0);
        CHECK(state.streams[0].s_plus0.norm() == 0.0);
        CHECK(state.streams[0].s_minus1.norm() == 0.0);
    }
}

TEST_CASE("cusum_update: hand-evaluated d=2 example") {
    // Zero state, Y = (1, 0): A+ = 0, E+ = 0.5, k = 0.1.
    const auto cfg = config_for(2, 0.1, 1);
    CusumState state = CusumState::zero(1, 2);
    Eigen::VectorXd y(2);
    y << 1, 0;
    auto [a_plus, a_minus] = accumulate_a(y);
    const double w = cusum_update(state.streams[0], a_plus, a_minus, cfg);
    CHECK(state.streams[0].c_plus == doctest::Approx(0.5));   // (0-0.5)^2 / 0.5
    CHECK(std::abs(state.streams[0].s_plus0[0]) == 0.0);      // (0+0)*0.8
    CHECK(state.streams[0].s_plus1[0] == doctest::Approx(0.4));  // (0+0.5)*0.8
    // The minus side sees A- = 1 vs E- = 0.5: same C by symmetry at zero state.
    CHECK(state.streams[0].c_minus == doctest::Approx(0.5));
    CHECK(w == doctest::Approx(0.4));
}

TEST_CASE("cusum_update: reset zeroes both accumulators whenever C <= k") {
    const auto cfg = config_for(4, 0.5, 1);
    CusumState state = CusumState::zero(1, 4);
    std::mt19937_64 rng(17);
    for (int t = 0; t < 300; ++t) {
        const int cell = static_cast<int>(rng() % 4);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
        y[cell] = 1.0;
        auto [a_plus, a_minus] = accumulate_a(y);
        cusum_update(state.streams[0], a_plus, a_minus, cfg);
        if (state.streams[0].c_plus <= cfg.k) {
            CHECK(state.streams[0].s_plus0.norm() == 0.0);
            CHECK(state.streams[0].s_plus1.norm() == 0.0);
        }
        CHECK((state.streams[0].s_plus0.array() >= 0.0).all());
        CHECK((state.streams[0].s_minus0.array() >= 0.0).all());
    }
}

TEST_CASE("cusum_update: corrupted negative state raises") {
    const auto cfg = config_for(3, 0.1, 1);
    CusumState state = CusumState::zero(1, 3);
    state.streams[0].s_plus0[0] = -0.5;
    Eigen::VectorXd y(3);
    y << 1, 0, 0;
    auto [a_plus, a_minus] = accumulate_a(y);
    CHECK_THROWS_AS(cusum_update(state.streams[0], a_plus, a_minus, cfg), NumericError);
}

TEST_CASE("cusum: 10-step random trace matches the independent reference within 1e-12") {
    for (const auto form : {CusumForm::paper, CusumForm::qiu_hawkins}) {
        const int d = 5;
        const auto cfg = config_for(d, 0.1, 1, form);
        CusumState state = CusumState::zero(1, d);
        ReferenceCusum ref(d, 0.1);
        std::mt19937_64 rng(2024);
        for (int t = 0; t < 10; ++t) {
            const int cell = static_cast<int>(rng() % d);
            Eigen::VectorXd y = Eigen::VectorXd::Zero(d);
            y[cell] = 1.0;
            auto [a_plus, a_minus] = accumulate_a(y);
            const double w = cusum_update(state.streams[0], a_plus, a_minus, cfg);
            if (form == CusumForm::paper) {
                CHECK(std::abs(w - ref.step(cell)) < 1e-12);
            } else {
                ref.step(cell);  // advance only; the classical form differs
            }
        }
    }
}

TEST_CASE("cusum: two-sided symmetry under negation") {
    const int d = 5;
    const int n = 1000;
    const Eigen::MatrixXd calib = random_gaussian(n, 1, 5150);
    const auto grid = fit_quantile_grid(calib, d);
    const Eigen::MatrixXd neg_calib = -calib;
    const auto neg_grid = fit_quantile_grid(neg_calib, d);
    const auto cfg = config_for(d, 0.1, 1);

    CusumState state = CusumState::zero(1, d);
    CusumState neg_state = CusumState::zero(1, d);
    std::mt19937_64 rng(808);
    std::normal_distribution<double> dist(0.0, 1.3);
    for (int t = 0; t < 200; ++t) {
        const double g = dist(rng);
        auto [ap, am] = accumulate_a(categorize(grid, g, 0));
        auto [nap, nam] = accumulate_a(categorize(neg_grid, -g, 0));
        const double w = cusum_update(state.streams[0], ap, am, cfg);
        const double nw = cusum_update(neg_state.streams[0], nap, nam, cfg);
        // W+ and W- swap; the two-sided statistic is unchanged.
        CHECK(std::abs(w - nw) < 1e-12);
        const double wp = std::max(0.0, state.streams[0].c_plus - cfg.k);
        const double nwm = std::max(0.0, neg_state.streams[0].c_minus - cfg.k);
        CHECK(std::abs(wp - nwm) < 1e-12);
    }
}

TEST_CASE("global_cusum: top-r aggregation") {
    CusumState state = CusumState::zero(3, 3);
    state.streams[0].w = 3.0;
    state.streams[1].w = 1.0;
    state.streams[2].w = 2.0;
    CHECK(global_cusum(state, 3) == doctest::Approx(6.0));  // plain sum
    CHECK(global_cusum(state, 1) == doctest::Approx(3.0));  // max
    CHECK(global_cusum(state, 2) == doctest::Approx(5.0));
    CHECK_THROWS_AS(global_cusum(state, 4), ConfigError);
}

TEST_CASE("calibrate_threshold: monotone in target FAR") {
    const Eigen::MatrixXd calib = random_gaussian(2000, 3, 2222);
    const auto grid = fit_quantile_grid(calib, 5);
    const auto cfg = config_for(5, 0.1, 3);
    const double h50 = calibrate_threshold(calib, grid, cfg, 0.5, 40, 200, 9);
    const double h10 = calibrate_threshold(calib, grid, cfg, 0.1, 40, 200, 9);
    const double h01 = calibrate_threshold(calib, grid, cfg, 0.01, 40, 200, 9);
    CHECK(h50 < h10);
    CHECK(h10 < h01);
}

TEST_CASE("calibrate_threshold: target 0.5 realizes about half exceedances held out") {
    const Eigen::MatrixXd calib = random_gaussian(3000, 2, 31415);
    const auto grid = fit_quantile_grid(calib, 5);
    auto cfg = config_for(5, 0.1, 2);
    cfg.h = calibrate_threshold(calib, grid, cfg, 0.5, 60, 300, 13);

    // Held-out Monte Carlo with fresh draws from the same distribution.
    std::mt19937_64 rng(999);
    std::normal_distribution<double> dist(0.0, 1.0);
    long exceed = 0, total = 0;
    for (int rep = 0; rep < 40; ++rep) {
        CusumState state = CusumState::zero(2, 5);
        for (int t = 0; t < 300; ++t) {
            Eigen::VectorXd reading(2);
            reading << dist(rng), dist(rng);
            const double stat = cusum_step(state, grid, reading, cfg);
            exceed += (stat >= cfg.h) ? 1 : 0;
            ++total;
        }
    }
    const double realized = static_cast<double>(exceed) / static_cast<double>(total);
    CHECK(realized == doctest::Approx(0.5).epsilon(0.1));  // 0.5 +- 0.05
}

TEST_CASE("stats json round trip") {
    const Eigen::MatrixXd codes = random_gaussian(400, 3, 5);
    StatsBundle bundle;
    bundle.code_mean = codes.colwise().mean();
    bundle.t2 = fit_t2(codes);
    bundle.t2.limit = 12.5;
    bundle.grid = fit_quantile_grid(codes, 5);
    bundle.cusum = config_for(5, 0.1, 3);
    bundle.cusum.h = 7.25;
    bundle.b_lim = 0.043;
    bundle.calibration = {77, 200, 600, 0.0027, 0.99, 0.99};
    const auto text = stats_to_json(bundle);
    const auto back = stats_from_json(text);
    CHECK(back.code_mean == bundle.code_mean);
    CHECK(back.t2.limit == bundle.t2.limit);
    CHECK(back.t2.precision == bundle.t2.precision);
    CHECK(back.grid.cuts[2] == bundle.grid.cuts[2]);
    CHECK(back.cusum.h == bundle.cusum.h);
    CHECK(back.cusum.r == bundle.cusum.r);
    CHECK(back.b_lim == bundle.b_lim);
    CHECK(back.calibration.seed == 77);
    CHECK_THROWS_AS(stats_from_json("{}"), DataError);
}
