#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "mbmon/core.hpp"
#include "mbmon/olae.hpp"

using namespace mbmon;

int main(int argc, char** argv) {
    int hidden = argc > 1 ? std::atoi(argv[1]) : 12;
    int latent = argc > 2 ? std::atoi(argv[2]) : 2;
    int window = argc > 3 ? std::atoi(argv[3]) : 20;
    int epochs = argc > 4 ? std::atoi(argv[4]) : 200;
    double lr = argc > 5 ? std::atof(argv[5]) : 2e-3;
    int T = argc > 6 ? std::atoi(argv[6]) : 800;
    double period = argc > 7 ? std::atof(argv[7]) : 20.0;

    std::mt19937_64 rng(99);
    std::normal_distribution<double> noise(0.0, 0.05);
    StreamMatrix sm;
    sm.variable_names = {"a", "b"};
    sm.values.resize(T, 2);
    for (int t = 0; t < T; ++t) {
        sm.values(t, 0) = std::sin(2.0 * M_PI * t / period) + noise(rng);
        sm.values(t, 1) = std::sin(2.0 * M_PI * t / period + 1.1) + noise(rng);
    }
    auto std_ = fit_standardizer(sm);
    auto data = apply_standardizer(std_, sm);
    auto ds = make_windows(data, window, 1);

    OlaeDims dims{2, hidden, latent, window};
    OlaeModel model = make_olae(dims, 11);
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 32;
    cfg.learning_rate = lr;
    cfg.ortho_weight = 1.0;
    cfg.seed = 5;

    auto t0 = std::chrono::steady_clock::now();
    auto result = train(model, ds, cfg);
    auto t1 = std::chrono::steady_clock::now();
    const auto& h0 = result.history.front();
    const auto& hN = result.history.back();
    std::printf("h=%d m=%d L=%d ep=%d lr=%g T=%d P=%g | mse %.4f->%.4f (ratio %.4f) ortho %.4f->%.4f (ratio %.4f) %.1fs warn=%zu\n",
                hidden, latent, window, epochs, lr, T, period, h0.mse, hN.mse, hN.mse / h0.mse,
                h0.ortho, hN.ortho, hN.ortho / h0.ortho,
                std::chrono::duration<double>(t1 - t0).count(), result.warnings.size());
    return 0;
}
