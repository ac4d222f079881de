#include <chrono>
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

double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
    const int epochs = argc > 1 ? std::atoi(argv[1]) : 30;
    const int t_train = argc > 2 ? std::atoi(argv[2]) : 8000;
    const int trials = argc > 3 ? std::atoi(argv[3]) : 5;
    const int jobs = argc > 4 ? std::atoi(argv[4]) : 4;

    RunConfig config = RunConfig::defaults();
    config.pipeline.train.epochs = epochs;
    config.pipeline.jobs = jobs;
    config.pipeline.seed = 1234;

    const ProcessSpec spec = ProcessSpec::default_benchmark(mix_seed(1234, "process-spec"));
    auto t0 = std::chrono::steady_clock::now();
    const auto in_control = generate(spec, t_train, mix_seed(1234, "in-control"));
    const auto stdevs = column_stdevs(in_control);

    auto artifacts = offline_learn(in_control, config.partition, config.pipeline);
    std::printf("offline_learn: %.1fs\n", elapsed(t0));
    for (const auto& b : artifacts.blocks) {
        std::printf("  block %d: t2_lim=%.2f h=%.2f b_lim=%.4g\n", b.block_id, b.stats.t2.limit,
                    b.stats.cusum.h, b.stats.b_lim);
    }

    // Held-out in-control FAR
    t0 = std::chrono::steady_clock::now();
    long alarms = 0, total = 0;
    for (int i = 0; i < 5; ++i) {
        const auto held = generate(spec, 2400, mix_seed(777, "held-out", i));
        const auto records = monitor(artifacts, held);
        for (const auto& r : records) {
            alarms += r.alarm_raw ? 1 : 0;
            ++total;
        }
    }
    std::printf("held-out FAR: %.4f (%ld/%ld) %.1fs\n",
                static_cast<double>(alarms) / total, alarms, total, elapsed(t0));

    // Per-archetype detection at magnitude 3, onset 600, T=2400
    for (const auto kind : {FaultKind::step, FaultKind::random_variation, FaultKind::slow_drift,
                            FaultKind::sticking}) {
        t0 = std::chrono::steady_clock::now();
        int detected = 0, fdd_ok = 0, fdr_ok = 0;
        double fdd_sum = 0.0, fdr_sum = 0.0;
        for (int trial = 0; trial < trials; ++trial) {
            const auto base = generate(spec, 2400, mix_seed(888, "trial", trial * 13 + 7));
            FaultSpec fault;
            fault.kind = kind;
            fault.targets = config.simulate.targets.at(kind);
            fault.magnitude = 3.0;
            fault.onset = 600;
            fault.seed = mix_seed(999, "fault", trial);
            const auto faulted = inject_fault(base, fault, stdevs);
            const auto records = monitor(artifacts, faulted);
            const auto result = evaluate(records, 600, 3, to_string(kind));
            if (result.detected) {
                ++detected;
                fdd_sum += static_cast<double>(*result.fdd);
                if (*result.fdd <= 100) ++fdd_ok;
            }
            fdr_sum += result.fdr.value_or(0.0);
            if (result.fdr.value_or(0.0) >= 0.8) ++fdr_ok;
        }
        std::printf("%-18s detected %d/%d  FDD<=100: %d  mean FDD %.1f  FDR>=0.8: %d  mean FDR %.3f  (%.1fs)\n",
                    to_string(kind).c_str(), detected, trials, fdd_ok,
                    detected ? fdd_sum / detected : -1.0, fdr_ok, fdr_sum / trials, elapsed(t0));
    }
    return 0;
}
