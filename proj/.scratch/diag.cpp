#include <cstdio>
#include <cstdlib>

#include "mbmon/config.hpp"
#include "mbmon/pipeline.hpp"
#include "mbmon/simgen.hpp"

using namespace mbmon;

namespace {
Eigen::VectorXd column_stdevs(const StreamMatrix& s) {
    Eigen::VectorXd out(s.cols());
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
        const auto col = s.values.col(j);
        out[j] = std::sqrt((col.array() - col.mean()).square().mean());
    }
    return out;
}
}  // namespace

int main(int argc, char** argv) {
    const int epochs = argc > 1 ? std::atoi(argv[1]) : 30;
    RunConfig config = RunConfig::defaults();
    config.pipeline.train.epochs = epochs;
    config.pipeline.jobs = 4;
    config.pipeline.seed = 1234;

    const ProcessSpec spec = ProcessSpec::default_benchmark(mix_seed(1234, "process-spec"));
    const auto in_control = generate(spec, 8000, mix_seed(1234, "in-control"));
    const auto stdevs = column_stdevs(in_control);
    auto artifacts = offline_learn(in_control, config.partition, config.pipeline);

    // Per-channel code stats on validation-like data for every block.
    const auto std_ = artifacts.standardizer;
    const auto standardized = apply_standardizer(std_, in_control);
    const auto blocks = partition(standardized, artifacts.partition);
    for (std::size_t b = 0; b < artifacts.blocks.size(); ++b) {
        const auto ds = make_windows(blocks[b], 20, 1);
        Eigen::MatrixXd codes(500, artifacts.blocks[b].model.dims.latent);
        for (int i = 0; i < 500; ++i) {
            codes.row(i) = encode(artifacts.blocks[b].model, ds.window(5000 + i)).transpose();
        }
        std::printf("block %d code channels (mean/std): ", artifacts.blocks[b].block_id);
        for (int j = 0; j < codes.cols(); ++j) {
            const auto col = codes.col(j);
            std::printf("(%.3f/%.4f) ", col.mean(),
                        std::sqrt((col.array() - col.mean()).square().mean()));
        }
        std::printf(" t2_lim=%.1f h=%.1f b_lim=%.4f\n", artifacts.blocks[b].stats.t2.limit,
                    artifacts.blocks[b].stats.cusum.h, artifacts.blocks[b].stats.b_lim);
    }

    // One step-fault trial: dump block 2 and plant series around onset.
    const auto base = generate(spec, 1200, mix_seed(888, "trial", 7));
    FaultSpec fault;
    fault.kind = FaultKind::step;
    fault.targets = {7};
    fault.magnitude = 3.0;
    fault.onset = 600;
    fault.seed = 4;
    const auto faulted = inject_fault(base, fault, stdevs);
    const auto records = monitor(artifacts, faulted);
    std::printf("\n   t |   T2/lim    W/h      B2      PFI alarm\n");
    for (const auto& r : records) {
        if (r.t % 50 == 0 || (r.t >= 595 && r.t <= 640 && r.t % 5 == 0)) {
            const auto& b2 = r.blocks[1];
            std::printf("%5ld | %8.3f %7.3f %8.5f %8.5f %d\n", r.t,
                        b2.t2 / artifacts.blocks[1].stats.t2.limit,
                        b2.w / artifacts.blocks[1].stats.cusum.h, b2.b, r.pfi,
                        r.alarm_raw ? 1 : 0);
        }
    }
    return 0;
}
