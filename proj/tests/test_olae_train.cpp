#include <doctest.h>

#include <cmath>
#include <random>

#include "mbmon/core.hpp"
#include "mbmon/olae.hpp"
#include "mbmon/simgen.hpp"

using namespace mbmon;

namespace {

// Two sine channels sharing one period with a phase offset, lightly noised.
StreamMatrix two_sine_stream(int t_len, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    StreamMatrix s;
    s.variable_names = {"a", "b"};
    s.values.resize(t_len, 2);
    for (int t = 0; t < t_len; ++t) {
        s.values(t, 0) = std::sin(2.0 * M_PI * t / 20.0) + noise(rng);
        s.values(t, 1) = std::sin(2.0 * M_PI * t / 20.0 + 1.1) + noise(rng);
    }
    return s;
}

WindowedDataset two_sine_windows(int t_len, std::uint64_t seed, int window) {
    const auto stream = two_sine_stream(t_len, seed);
    const auto std_ = fit_standardizer(stream);
    return make_windows(apply_standardizer(std_, stream), window, 1);
}

TrainConfig sine_config() {
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 32;
    cfg.learning_rate = 3e-3;
    cfg.ortho_weight = 1.0;
    cfg.seed = 5;
    return cfg;
}

std::string serialize(OlaeModel& m) { return model_to_json(m); }

}  // namespace

TEST_CASE("train: two-sine run pushes mse below 0.1x and ortho below 0.2x initial") {
    const auto ds = two_sine_windows(800, 99, 10);
    const OlaeModel init = make_olae(OlaeDims{2, 12, 2, 10}, 11);
    const auto result = train(init, ds, sine_config());
    const auto& first = result.history.front();
    const auto& last = result.history.back();
    CHECK(last.mse < 0.1 * first.mse);
    CHECK(last.ortho < 0.2 * first.ortho);
}

TEST_CASE("train: identical seed and config reproduce bit-identical parameters") {
    const auto ds = two_sine_windows(300, 4, 10);
    TrainConfig cfg = sine_config();
    cfg.epochs = 12;
    const OlaeModel init = make_olae(OlaeDims{2, 8, 2, 10}, 21);
    auto a = train(init, ds, cfg);
    auto b = train(init, ds, cfg);
    CHECK(serialize(a.model) == serialize(b.model));
}

TEST_CASE("train: zero ortho weight ignores the penalty configuration entirely") {
    const auto ds = two_sine_windows(300, 4, 10);
    TrainConfig cfg = sine_config();
    cfg.epochs = 10;
    cfg.ortho_weight = 0.0;
    const OlaeModel init = make_olae(OlaeDims{2, 8, 2, 10}, 31);
    auto a = train(init, ds, cfg);
    cfg.gram_normalization = GramNormalization::none;
    cfg.ortho_exclude_diagonal = true;
    auto b = train(init, ds, cfg);
    CHECK(serialize(a.model) == serialize(b.model));  // plain LSTM-AE either way
    CHECK(a.history.back().ortho > 0.0);              // still reported
}

TEST_CASE("train: empty dataset and diverging config raise the documented errors") {
    const auto ds = two_sine_windows(60, 4, 10);
    TrainConfig cfg = sine_config();
    cfg.epochs = 0;
    const OlaeModel init = make_olae(OlaeDims{2, 8, 2, 10}, 31);
    CHECK_THROWS_AS(train(init, ds, cfg), ConfigError);
    cfg.epochs = 2;
    // Bounded activations keep the reconstruction finite no matter how hard
    // the weights explode; only the weight-Gram penalty can overflow, so the
    // step has to push parameters past ~1e77.
    cfg.learning_rate = 1e200;
    CHECK_THROWS_AS(train(init, ds, cfg), NumericError);
}

TEST_CASE("train: ortho-trained codes are less redundant than the same-seed baseline") {
    // Paired runs on one generated process block: identical data, init and
    // seed; only the penalty differs.
    const ProcessSpec spec = ProcessSpec::default_benchmark(41);
    const auto stream = generate(spec, 1500, 43);
    BlockPartition reactor;
    reactor.blocks = {{2, {6, 7, 8, 20, 29}}};
    const auto block = partition(apply_standardizer(fit_standardizer(stream), stream), reactor)
                           .front();
    const auto ds = make_windows(block, 10, 1);
    const OlaeModel init = make_olae(OlaeDims{5, 16, 4, 10}, 7);
    TrainConfig cfg = sine_config();
    cfg.epochs = 60;
    cfg.learning_rate = 2e-3;

    auto with_ortho = train(init, ds, cfg);
    TrainConfig baseline_cfg = cfg;
    baseline_cfg.ortho_weight = 0.0;
    auto baseline = train(init, ds, baseline_cfg);

    const auto report_ortho = redundancy_report(encode_all(with_ortho.model, ds));
    const auto report_base = redundancy_report(encode_all(baseline.model, ds));

    auto mean_offdiag = [](const Eigen::MatrixXd& m) {
        double acc = 0.0;
        int count = 0;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                if (i != j && std::isfinite(m(i, j))) {
                    acc += std::abs(m(i, j));
                    ++count;
                }
            }
        }
        return acc / count;
    };
    CHECK(mean_offdiag(report_ortho.abs_corr) < mean_offdiag(report_base.abs_corr));
    // Gram residual shrinks as well.
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
    CHECK((report_ortho.gram - eye).norm() < (report_base.gram - eye).norm());
}
