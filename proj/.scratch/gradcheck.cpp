#include <chrono>
#include <cstdio>
#include <random>

#include "mbmon/olae.hpp"

using namespace mbmon;

int main() {
    for (double lambda : {0.0, 1.0}) {
        OlaeDims dims{2, 4, 2, 3};
        OlaeModel model = make_olae(dims, 42);
        TrainConfig cfg;
        cfg.ortho_weight = lambda;

        std::mt19937_64 rng(7);
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<Eigen::MatrixXd> batch;
        for (int b = 0; b < 3; ++b) {
            Eigen::MatrixXd w(3, 2);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 2; ++c) w(r, c) = dist(rng);
            batch.push_back(w);
        }

        auto t0 = std::chrono::steady_clock::now();
        auto [grads, lb] = grad(model, batch, cfg);
        auto gv = param_views(grads);
        auto mv = param_views(model);

        double worst = 0.0;
        std::string worst_name;
        const double step = 1e-5;
        for (std::size_t i = 0; i < mv.size(); ++i) {
            for (Eigen::Index k = 0; k < mv[i].size; ++k) {
                const double orig = mv[i].data[k];
                mv[i].data[k] = orig + step;
                double lp = loss(model, batch, cfg).total;
                mv[i].data[k] = orig - step;
                double lm = loss(model, batch, cfg).total;
                mv[i].data[k] = orig;
                const double fd = (lp - lm) / (2.0 * step);
                const double an = gv[i].data[k];
                const double rel = std::abs(an - fd) / std::max(1.0, std::abs(an));
                if (rel > worst) {
                    worst = rel;
                    worst_name = mv[i].name + "[" + std::to_string(k) + "]";
                }
            }
        }
        auto t1 = std::chrono::steady_clock::now();
        double secs = std::chrono::duration<double>(t1 - t0).count();
        std::printf("lambda=%.0f total=%.6f mse=%.6f ortho=%.6f worst_rel=%.3e at %s (%.2fs)\n",
                    lambda, lb.total, lb.mse, lb.ortho, worst, worst_name.c_str(), secs);
        if (worst > 1e-4) {
            std::printf("GRADCHECK FAILED\n");
            return 1;
        }
    }
    std::printf("GRADCHECK OK\n");
    return 0;
}
