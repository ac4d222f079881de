#include <cstdio>
#include <random>
#include <algorithm>
#include "mbmon/stats.hpp"
using namespace mbmon;

int main() {
    // 5 iid N(0,1) streams; for each k: per-step 0.9973-quantile of the
    // global W in an early window vs a late window (stationarity check),
    // plus detection delay when all streams switch to N(0, 2) (variance 2).
    std::mt19937_64 rng(1);
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::MatrixXd calib(5000, 5);
    for (int r = 0; r < 5000; ++r)
        for (int c = 0; c < 5; ++c) calib(r, c) = dist(rng);
    const auto grid = fit_quantile_grid(calib, 5);

    for (double k : {0.1, 1.0, 2.0, 2.5, 3.0, 3.5}) {
        CusumConfig cfg;
        cfg.d = 5; cfg.k = k; cfg.finalize(5);
        std::vector<double> early, late;
        for (int rep = 0; rep < 60; ++rep) {
            CusumState state = CusumState::zero(5, 5);
            std::mt19937_64 srng(100 + rep);
            for (int t = 0; t < 2400; ++t) {
                Eigen::VectorXd reading(5);
                for (int c = 0; c < 5; ++c) reading[c] = dist(srng);
                const double g = cusum_step(state, grid, reading, cfg);
                if (t >= 100 && t < 600) early.push_back(g);
                if (t >= 1900) late.push_back(g);
            }
        }
        auto q = [](std::vector<double>& v, double p) {
            std::sort(v.begin(), v.end());
            return v[static_cast<std::size_t>(p * (v.size() - 1))];
        };
        const double qe = q(early, 0.9973), ql = q(late, 0.9973);
        const double me = q(early, 0.5), ml = q(late, 0.5);

        // detection delay: switch to sigma^2=2 at t=300
        std::vector<int> delays;
        int misses = 0;
        for (int rep = 0; rep < 40; ++rep) {
            CusumState state = CusumState::zero(5, 5);
            std::mt19937_64 srng(999 + rep);
            int hit = -1;
            for (int t = 0; t < 700; ++t) {
                Eigen::VectorXd reading(5);
                const double s = (t >= 300) ? std::sqrt(2.0) : 1.0;
                for (int c = 0; c < 5; ++c) reading[c] = s * dist(srng);
                const double g = cusum_step(state, grid, reading, cfg);
                if (t >= 300 && hit < 0 && g >= ql) hit = t - 300;
            }
            if (hit < 0) ++misses; else delays.push_back(hit);
        }
        std::sort(delays.begin(), delays.end());
        std::printf("k=%.1f  med(early)=%.2f med(late)=%.2f  q9973(early)=%.1f q9973(late)=%.1f  det med=%d max=%d miss=%d\n",
                    k, me, ml, qe, ql,
                    delays.empty() ? -1 : delays[delays.size()/2],
                    delays.empty() ? -1 : delays.back(), misses);
    }
    return 0;
}
