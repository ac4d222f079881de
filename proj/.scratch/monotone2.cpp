#include <cstdio>
#include <random>
#include <algorithm>
#include "mbmon/fusion.hpp"
using namespace mbmon;

int main() {
    // Hypothesis: bumping the metric with the LARGEST normalized ratio
    // S_i/S_lim_i never decreases B.
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> val(0.0, 30.0);
    std::uniform_real_distribution<double> lim(0.5, 10.0);
    std::uniform_real_distribution<double> bump(1.01, 3.0);
    int violations = 0;
    for (int i = 0; i < 200000; ++i) {
        MetricReading r1{val(rng), lim(rng), MetricId::t2, 1};
        MetricReading r2{val(rng), lim(rng), MetricId::cusum, 1};
        const double b0 = fuse_block({r1, r2}, 0.01).b;
        if (r1.value / r1.limit >= r2.value / r2.limit) r1.value *= bump(rng);
        else r2.value *= bump(rng);
        const double b1 = fuse_block({r1, r2}, 0.01).b;
        if (b1 < b0 - 1e-15) ++violations;
    }
    std::printf("dominant-metric violations: %d / 200000\n", violations);

    // Also: bumping ALL metrics proportionally?
    int viol_all = 0;
    for (int i = 0; i < 200000; ++i) {
        MetricReading r1{val(rng), lim(rng), MetricId::t2, 1};
        MetricReading r2{val(rng), lim(rng), MetricId::cusum, 1};
        const double b0 = fuse_block({r1, r2}, 0.01).b;
        const double c = bump(rng);
        r1.value *= c; r2.value *= c;
        const double b1 = fuse_block({r1, r2}, 0.01).b;
        if (b1 < b0 - 1e-15) ++viol_all;
    }
    std::printf("proportional-increase violations: %d / 200000\n", viol_all);
    return 0;
}
