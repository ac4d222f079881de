#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "mbmon/core.hpp"
#include "mbmon/olae.hpp"

using namespace mbmon;

int main(int argc, char** argv) {
    int hidden = argc > 1 ? std::atoi(argv[1]) : 8;
    int latent = argc > 2 ? std::atoi(argv[2]) : 2;
    int window = argc > 3 ? std::atoi(argv[3]) : 10;
    int epochs = argc > 4 ? std::atoi(argv[4]) : 200;
    double lr = argc > 5 ? std::atof(argv[5]) : 3e-3;
    int T = argc > 6 ? std::atoi(argv[6]) : 600;

    // 2-sine dataset with light noise
    std::mt19937_64 rng(99);
    std::normal_distribution<double> noise(0.0, 0.05);
    StreamMatrix sm;
    sm.variable_names = {"a", "b"};
    sm.values.resize(T, 2);
    for (int t = 0; t < T; ++t) {
        sm.values(t, 0) = std::sin(2.0 * M_PI * t / 23.0) + noise(rng);
        sm.values(t, 1) = std::sin(2.0 * M_PI * t / 41.0 + 0.7) + noise(rng);
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
    std::printf("hidden=%d latent=%d L=%d epochs=%d lr=%g T=%d\n", hidden, latent, window,
                epochs, lr, T);
    std::printf("initial: total=%.4f mse=%.4f ortho=%.4f\n", h0.total, h0.mse, h0.ortho);
    std::printf("final:   total=%.4f mse=%.4f ortho=%.4f\n", hN.total, hN.mse, hN.ortho);
    std::printf("mse ratio=%.4f  ortho ratio=%.4f  (%.1fs)\n", hN.mse / h0.mse,
                hN.ortho / h0.ortho, std::chrono::duration<double>(t1 - t0).count());

    // gram of trained codes
    auto codes = encode_all(result.model, ds);
    auto rep = redundancy_report(codes);
    std::printf("trained gram:\n");
    for (int i = 0; i < latent; ++i) {
        for (int j = 0; j < latent; ++j) std::printf("%8.4f ", rep.gram(i, j));
        std::printf("\n");
    }
    for (const auto& w : result.warnings) std::printf("warning: %s\n", w.c_str());
    return 0;
}
