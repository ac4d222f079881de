#include <cstdio>
#include <random>
#include "mbmon/fusion.hpp"
using namespace mbmon;

int main() {
    // Natural random-grid test: random readings, bump one coordinate up.
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> val(0.0, 30.0);
    std::uniform_real_distribution<double> lim(0.5, 10.0);
    std::uniform_real_distribution<double> bump(1.01, 3.0);
    int violations = 0;
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        MetricReading r1{val(rng), lim(rng), MetricId::t2, 1};
        MetricReading r2{val(rng), lim(rng), MetricId::cusum, 1};
        const double b0 = fuse_block({r1, r2}, 0.01).b;
        if (rng() % 2) r1.value *= bump(rng); else r2.value *= bump(rng);
        const double b1 = fuse_block({r1, r2}, 0.01).b;
        if (b1 < b0 - 1e-15) { ++violations; worst = std::max(worst, b0 - b1); }
    }
    std::printf("block-level violations: %d / 10000, worst drop %.3e\n", violations, worst);

    violations = 0; worst = 0;
    std::uniform_real_distribution<double> bval(0.0, 1.0);
    std::uniform_real_distribution<double> blim(0.005, 0.3);
    for (int i = 0; i < 10000; ++i) {
        std::vector<std::pair<double,double>> blocks{{bval(rng), blim(rng)}, {bval(rng), blim(rng)},
                                                     {bval(rng), blim(rng)}};
        const double p0 = fuse_plant(blocks, 0.01, 0.01).pfi;
        blocks[rng() % 3].first *= bump(rng);
        const double p1 = fuse_plant(blocks, 0.01, 0.01).pfi;
        if (p1 < p0 - 1e-15) { ++violations; worst = std::max(worst, p0 - p1); }
    }
    std::printf("plant-level violations: %d / 10000, worst drop %.3e\n", violations, worst);
    return 0;
}
