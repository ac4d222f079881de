#include "mbmon/stats.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "json_tensors.hpp"

namespace mbmon {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kDiagFloor = 1e-12;

double population_stdev(const VectorXd& x) {
    const double mean = x.mean();
    return std::sqrt((x.array() - mean).square().mean());
}

}  // namespace

void CusumConfig::finalize(int streams) {
    if (d < 2) {
        throw ConfigError("cusum: quantile count d must be >= 2");
    }
    e_plus.resize(d - 1);
    e_minus.resize(d - 1);
    for (int l = 1; l <= d - 1; ++l) {
        e_minus[l - 1] = static_cast<double>(l) / d;
        e_plus[l - 1] = 1.0 - e_minus[l - 1];
    }
    if (r <= 0) {
        r = (streams + 1) / 2;  // ceil(streams / 2)
    }
    validate(streams);
}

void CusumConfig::validate(int streams) const {
    if (d < 2) {
        throw ConfigError("cusum: quantile count d must be >= 2");
    }
    if (k < 0.0) {
        throw ConfigError("cusum: allowance k must be >= 0");
    }
    if (r < 1 || r > streams) {
        throw ConfigError("cusum: top-r count " + std::to_string(r) +
                          " outside [1, " + std::to_string(streams) + "]");
    }
    if (e_plus.size() != d - 1 || e_minus.size() != d - 1) {
        throw ConfigError("cusum: expectation vectors not finalized");
    }
}

CusumState CusumState::zero(int streams, int d) {
    CusumState state;
    state.streams.resize(static_cast<std::size_t>(streams));
    for (auto& s : state.streams) {
        s.s_plus0 = VectorXd::Zero(d - 1);
        s.s_plus1 = VectorXd::Zero(d - 1);
        s.s_minus0 = VectorXd::Zero(d - 1);
        s.s_minus1 = VectorXd::Zero(d - 1);
    }
    return state;
}

T2Model fit_t2(const Eigen::MatrixXd& codes) {
    const Index n = codes.rows();
    const Index m = codes.cols();
    if (n <= m) {
        throw DataError("t2: needs more code rows (" + std::to_string(n) +
                        ") than dimensions (" + std::to_string(m) + ")");
    }
    T2Model model;
    Eigen::RowVectorXd mean = codes.colwise().mean();
    MatrixXd centered = codes.rowwise() - mean;
    model.covariance = (centered.transpose() * centered) / static_cast<double>(n);
    const double eps = 1e-8 * model.covariance.trace() / static_cast<double>(m);
    MatrixXd regularized = model.covariance + eps * MatrixXd::Identity(m, m);
    model.precision = regularized.ldlt().solve(MatrixXd::Identity(m, m));
    return model;
}

double t2_score(const T2Model& model, const Eigen::VectorXd& c) {
    if (c.size() != model.precision.rows()) {
        throw DataError("t2_score: code length does not match fitted dimension");
    }
    return c.dot(model.precision * c);
}

KdeLimitResult kde_limit(const Eigen::VectorXd& scores, double confidence) {
    const Index n = scores.size();
    if (n < 50) {
        throw DataError("kde_limit: needs at least 50 scores, got " + std::to_string(n));
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw ConfigError("kde_limit: confidence must lie in (0, 1)");
    }
    KdeLimitResult result;
    const double sd = population_stdev(scores);
    if (sd < 1e-12) {
        result.limit = scores.maxCoeff();
        result.degenerate = true;
        return result;
    }
    const double bw = 1.06 * sd * std::pow(static_cast<double>(n), -0.2);
    const double lo = scores.minCoeff() - 3.0 * bw;
    const double hi = scores.maxCoeff() + 3.0 * bw;
    constexpr int kGrid = 2048;
    const double step = (hi - lo) / (kGrid - 1);

    VectorXd density(kGrid);
    const double norm = 1.0 / (static_cast<double>(n) * bw * std::sqrt(2.0 * M_PI));
    for (int i = 0; i < kGrid; ++i) {
        const double x = lo + step * i;
        density[i] = norm * ((scores.array() - x) / bw).square().unaryExpr([](double z) {
                                return std::exp(-0.5 * z);
                            }).sum();
    }
    // Trapezoidal CDF, renormalized so the last grid point carries mass 1.
    VectorXd cdf(kGrid);
    cdf[0] = 0.0;
    for (int i = 1; i < kGrid; ++i) {
        cdf[i] = cdf[i - 1] + 0.5 * (density[i - 1] + density[i]) * step;
    }
    const double total = cdf[kGrid - 1];
    if (total <= 0.0) {
        throw NumericError("kde_limit: density integrated to zero");
    }
    cdf /= total;
    for (int i = 1; i < kGrid; ++i) {
        if (cdf[i] >= confidence) {
            const double span = cdf[i] - cdf[i - 1];
            const double frac = (span > 0.0) ? (confidence - cdf[i - 1]) / span : 1.0;
            result.limit = lo + step * (i - 1 + frac);
            return result;
        }
    }
    result.limit = hi;
    return result;
}

QuantileGrid fit_quantile_grid(const Eigen::MatrixXd& calib, int d) {
    if (d < 2) {
        throw ConfigError("quantile grid: d must be >= 2");
    }
    const Index n = calib.rows();
    if (n < 10 * static_cast<Index>(d)) {
        throw DataError("quantile grid: needs at least " + std::to_string(10 * d) +
                        " calibration rows, got " + std::to_string(n));
    }
    QuantileGrid grid;
    grid.d = d;
    grid.cuts.reserve(static_cast<std::size_t>(calib.cols()));
    for (Index x = 0; x < calib.cols(); ++x) {
        std::vector<double> sorted(calib.col(x).data(), calib.col(x).data() + n);
        std::sort(sorted.begin(), sorted.end());
        VectorXd cuts(d - 1);
        for (int l = 1; l <= d - 1; ++l) {
            const long long pos = static_cast<long long>(l) * n;
            if (pos % d == 0) {
                // l*n/d is an integer order statistic: midpoint interpolation.
                const auto k = static_cast<std::size_t>(pos / d);
                cuts[l - 1] = 0.5 * (sorted[k - 1] + sorted[k]);
            } else {
                const auto k = static_cast<std::size_t>(pos / d + 1);  // ceil
                cuts[l - 1] = sorted[k - 1];
            }
        }
        grid.cuts.push_back(cuts);
    }
    // Cell-occupancy invariant on the calibration data itself.
    const double band = 2.0 / std::sqrt(static_cast<double>(n));
    for (Index x = 0; x < calib.cols(); ++x) {
        VectorXd counts = VectorXd::Zero(d);
        for (Index t = 0; t < n; ++t) {
            counts += categorize(grid, calib(t, x), static_cast<int>(x));
        }
        for (int l = 0; l < d; ++l) {
            const double frac = counts[l] / static_cast<double>(n);
            if (std::abs(frac - 1.0 / d) > band) {
                throw DataError("quantile grid: stream " + std::to_string(x) + " cell " +
                                std::to_string(l + 1) + " holds fraction " +
                                std::to_string(frac) + ", outside 1/d +- 2/sqrt(n)" +
                                " (tied or degenerate data)");
            }
        }
    }
    return grid;
}

Eigen::VectorXd categorize(const QuantileGrid& grid, double g, int stream) {
    if (stream < 0 || stream >= grid.stream_count()) {
        throw DataError("categorize: stream index out of range");
    }
    const VectorXd& cuts = grid.cuts[static_cast<std::size_t>(stream)];
    VectorXd y = VectorXd::Zero(grid.d);
    // First cell whose right edge is >= g; ties on a cut go to the lower cell.
    const double* begin = cuts.data();
    const double* end = begin + cuts.size();
    const auto idx = std::lower_bound(begin, end, g) - begin;
    y[static_cast<Index>(idx)] = 1.0;
    return y;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> accumulate_a(const Eigen::VectorXd& y) {
    const Index d = y.size();
    if (d < 2) {
        throw DataError("accumulate_a: indicator must have length >= 2");
    }
    double sum = 0.0;
    for (Index i = 0; i < d; ++i) {
        if (y[i] != 0.0 && y[i] != 1.0) {
            throw DataError("accumulate_a: indicator entries must be 0 or 1");
        }
        sum += y[i];
    }
    if (sum != 1.0) {
        throw DataError("accumulate_a: indicator must be one-hot");
    }
    VectorXd a_minus(d - 1);
    double acc = 0.0;
    for (Index l = 0; l < d - 1; ++l) {
        acc += y[l];
        a_minus[l] = acc;
    }
    VectorXd a_plus = VectorXd::Ones(d - 1) - a_minus;
    return {a_plus, a_minus};
}

namespace {

// One side of the two-sided recursion; returns W = max(0, C - k).
double cusum_side(VectorXd& s0, VectorXd& s1, const VectorXd& a, const VectorXd& e,
                  const CusumConfig& cfg, double& c_out) {
    if ((s0.array() < 0.0).any() || (s1.array() < 0.0).any()) {
        throw NumericError("cusum: negative accumulator entries (corrupted state)");
    }
    const VectorXd denom = (e + s1).cwiseMax(kDiagFloor);
    double c = 0.0;
    if (cfg.form == CusumForm::paper) {
        const VectorXd u = a - e + s0 - s1;
        const VectorXd v = s0 + s1 - e + a;
        c = (u.array() * v.array() / denom.array()).sum();
    } else {
        const VectorXd w = (s0 + a) - (s1 + e);
        c = (w.array().square() / denom.array()).sum();
    }
    c_out = c;
    if (c <= cfg.k) {
        s0.setZero();
        s1.setZero();
        return 0.0;
    }
    const double shrink = (c - cfg.k) / c;
    s0 = (s0 + a) * shrink;
    s1 = (s1 + e) * shrink;
    return c - cfg.k;
}

}  // namespace

double cusum_update(CusumStreamState& state, const Eigen::VectorXd& a_plus,
                    const Eigen::VectorXd& a_minus, const CusumConfig& cfg) {
    if (a_plus.size() != cfg.d - 1 || a_minus.size() != cfg.d - 1 ||
        state.s_plus0.size() != cfg.d - 1) {
        throw DataError("cusum_update: dimension mismatch with config");
    }
    const double w_plus =
        cusum_side(state.s_plus0, state.s_plus1, a_plus, cfg.e_plus, cfg, state.c_plus);
    const double w_minus =
        cusum_side(state.s_minus0, state.s_minus1, a_minus, cfg.e_minus, cfg, state.c_minus);
    state.w = std::max(w_minus, w_plus);
    return state.w;
}

double global_cusum(const CusumState& state, int r) {
    const int streams = static_cast<int>(state.streams.size());
    if (r < 1 || r > streams) {
        throw ConfigError("global_cusum: r outside [1, stream count]");
    }
    std::vector<double> w;
    w.reserve(state.streams.size());
    for (const auto& s : state.streams) {
        w.push_back(s.w);
    }
    std::partial_sort(w.begin(), w.begin() + r, w.end(), std::greater<>());
    double sum = 0.0;
    for (int i = 0; i < r; ++i) {
        sum += w[static_cast<std::size_t>(i)];
    }
    return sum;
}

double cusum_step(CusumState& state, const QuantileGrid& grid, const Eigen::VectorXd& reading,
                  const CusumConfig& cfg) {
    if (reading.size() != grid.stream_count() ||
        static_cast<int>(state.streams.size()) != grid.stream_count()) {
        throw DataError("cusum_step: stream count mismatch");
    }
    for (int x = 0; x < grid.stream_count(); ++x) {
        const VectorXd y = categorize(grid, reading[x], x);
        auto [a_plus, a_minus] = accumulate_a(y);
        cusum_update(state.streams[static_cast<std::size_t>(x)], a_plus, a_minus, cfg);
    }
    state.global = global_cusum(state, cfg.r);
    return state.global;
}

double calibrate_threshold(const Eigen::MatrixXd& in_control, const QuantileGrid& grid,
                           const CusumConfig& cfg, double target_far, int n_reps, int horizon,
                           std::uint64_t seed, int block_len) {
    if (!(target_far > 0.0 && target_far < 1.0)) {
        throw ConfigError("calibrate_threshold: target_far must lie in (0, 1)");
    }
    if (n_reps < 1 || horizon < 1 || block_len < 1) {
        throw ConfigError("calibrate_threshold: n_reps, horizon and block_len must be >= 1");
    }
    const Index n = in_control.rows();
    if (n < 10 || n < 2 * block_len) {
        throw DataError("calibrate_threshold: insufficient calibration data (" +
                        std::to_string(n) + " rows)");
    }
    cfg.validate(grid.stream_count());

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::uniform_int_distribution<Index> pick_start(0, n - block_len);
    std::vector<double> stats;
    stats.reserve(static_cast<std::size_t>(n_reps) * static_cast<std::size_t>(horizon));
    for (int rep = 0; rep < n_reps; ++rep) {
        CusumState state = CusumState::zero(grid.stream_count(), cfg.d);
        Index segment_start = 0;
        int segment_pos = block_len;  // force a fresh segment on the first step
        for (int t = 0; t < horizon; ++t) {
            Eigen::VectorXd reading;
            if (block_len == 1) {
                reading = in_control.row(pick(rng)).transpose();
            } else {
                if (segment_pos >= block_len) {
                    segment_start = pick_start(rng);
                    segment_pos = 0;
                }
                reading = in_control.row(segment_start + segment_pos).transpose();
                ++segment_pos;
            }
            stats.push_back(cusum_step(state, grid, reading, cfg));
        }
    }
    std::sort(stats.begin(), stats.end());
    const auto count = static_cast<double>(stats.size());
    auto idx = static_cast<std::size_t>(std::ceil((1.0 - target_far) * count));
    idx = std::min(std::max<std::size_t>(idx, 1), stats.size());
    return stats[idx - 1];
}

std::string stats_to_json(const StatsBundle& bundle) {
    nlohmann::ordered_json j;
    j["version"] = "stats_v1";
    j["code_mean"] = detail::tensor_to_json(bundle.code_mean);
    j["t2"] = {{"covariance", detail::tensor_to_json(bundle.t2.covariance)},
               {"precision", detail::tensor_to_json(bundle.t2.precision)},
               {"limit", bundle.t2.limit}};
    nlohmann::ordered_json cuts = nlohmann::ordered_json::array();
    for (const auto& c : bundle.grid.cuts) {
        cuts.push_back(std::vector<double>(c.data(), c.data() + c.size()));
    }
    j["quantile_grid"] = {{"d", bundle.grid.d}, {"cuts", cuts}};
    j["cusum"] = {{"d", bundle.cusum.d},
                  {"k", bundle.cusum.k},
                  {"h", bundle.cusum.h},
                  {"r", bundle.cusum.r},
                  {"form", bundle.cusum.form == CusumForm::paper ? "paper" : "qiu_hawkins"}};
    j["b_lim"] = bundle.b_lim;
    j["calibration"] = {{"seed", bundle.calibration.seed},
                        {"n_reps", bundle.calibration.n_reps},
                        {"horizon", bundle.calibration.horizon},
                        {"target_far", bundle.calibration.target_far},
                        {"t2_confidence", bundle.calibration.t2_confidence},
                        {"b_lim_confidence", bundle.calibration.b_lim_confidence}};
    return j.dump(2);
}

StatsBundle stats_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("stats json: parse failure: ") + e.what());
    }
    if (j.value("version", "") != "stats_v1") {
        throw DataError("stats json: unsupported version '" + j.value("version", "") + "'");
    }
    StatsBundle bundle;
    try {
        bundle.code_mean = detail::vector_from_json(j.at("code_mean"));
        bundle.t2.covariance = detail::tensor_from_json(j.at("t2").at("covariance"));
        bundle.t2.precision = detail::tensor_from_json(j.at("t2").at("precision"));
        bundle.t2.limit = j.at("t2").at("limit").get<double>();
        bundle.grid.d = j.at("quantile_grid").at("d").get<int>();
        for (const auto& c : j.at("quantile_grid").at("cuts")) {
            const auto vals = c.get<std::vector<double>>();
            bundle.grid.cuts.push_back(
                Eigen::Map<const VectorXd>(vals.data(), static_cast<Index>(vals.size())));
        }
        const auto& cusum = j.at("cusum");
        bundle.cusum.d = cusum.at("d").get<int>();
        bundle.cusum.k = cusum.at("k").get<double>();
        bundle.cusum.h = cusum.at("h").get<double>();
        bundle.cusum.r = cusum.at("r").get<int>();
        const auto form = cusum.at("form").get<std::string>();
        if (form == "paper") {
            bundle.cusum.form = CusumForm::paper;
        } else if (form == "qiu_hawkins") {
            bundle.cusum.form = CusumForm::qiu_hawkins;
        } else {
            throw DataError("stats json: unknown cusum form '" + form + "'");
        }
        // The grid may be empty when the CUSUM metric was ablated away;
        // expectations are rebuilt but stream validation is skipped then.
        if (bundle.grid.stream_count() > 0) {
            bundle.cusum.finalize(bundle.grid.stream_count());
        } else {
            bundle.cusum.e_plus.resize(bundle.cusum.d - 1);
            bundle.cusum.e_minus.resize(bundle.cusum.d - 1);
            for (int l = 1; l <= bundle.cusum.d - 1; ++l) {
                bundle.cusum.e_minus[l - 1] = static_cast<double>(l) / bundle.cusum.d;
                bundle.cusum.e_plus[l - 1] = 1.0 - bundle.cusum.e_minus[l - 1];
            }
        }
        bundle.b_lim = j.at("b_lim").get<double>();
        const auto& cal = j.at("calibration");
        bundle.calibration.seed = cal.at("seed").get<std::uint64_t>();
        bundle.calibration.n_reps = cal.at("n_reps").get<int>();
        bundle.calibration.horizon = cal.at("horizon").get<int>();
        bundle.calibration.target_far = cal.at("target_far").get<double>();
        bundle.calibration.t2_confidence = cal.at("t2_confidence").get<double>();
        bundle.calibration.b_lim_confidence = cal.at("b_lim_confidence").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("stats json: missing or malformed field: ") + e.what());
    }
    return bundle;
}

}  // namespace mbmon
