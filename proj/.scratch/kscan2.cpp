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
}

int main(int argc, char** argv) {
    const double k = argc > 1 ? std::atof(argv[1]) : 2.5;
    const int trials = argc > 2 ? std::atoi(argv[2]) : 5;
    RunConfig config = RunConfig::defaults();
    config.pipeline.train.epochs = 30;
    config.pipeline.jobs = 4;
    config.pipeline.seed = 1234;
    config.pipeline.allowance = k;

    const ProcessSpec spec = ProcessSpec::default_benchmark(mix_seed(1234, "process-spec"));
    const auto in_control = generate(spec, 8000, mix_seed(1234, "in-control"));
    const auto stdevs = column_stdevs(in_control);
    auto artifacts = offline_learn(in_control, config.partition, config.pipeline);
    std::printf("k=%.1f  limits:", k);
    for (const auto& b : artifacts.blocks)
        std::printf(" [t2 %.1f, h %.1f, blim %.4f]", b.stats.t2.limit, b.stats.cusum.h,
                    b.stats.b_lim);
    std::printf("\n");

    long alarms = 0, total = 0;
    for (int i = 0; i < 5; ++i) {
        const auto held = generate(spec, 2400, mix_seed(777, "held-out", i));
        for (const auto& r : monitor(artifacts, held)) {
            alarms += r.alarm_raw ? 1 : 0;
            ++total;
        }
    }
    std::printf("  held-out FAR: %.4f\n", static_cast<double>(alarms) / total);

    for (const auto kind : {FaultKind::step, FaultKind::random_variation, FaultKind::slow_drift,
                            FaultKind::sticking}) {
        int fdd_ok = 0, fdr_ok = 0, both = 0;
        double fdd_sum = 0, fdr_sum = 0;
        int det = 0;
        for (int trial = 0; trial < trials; ++trial) {
            const auto base = generate(spec, 2400, mix_seed(888, "trial", trial * 13 + 7));
            FaultSpec fault;
            fault.kind = kind;
            fault.targets = config.simulate.targets.at(kind);
            fault.magnitude = 3.0;
            fault.onset = 600;
            fault.seed = mix_seed(999, "fault", trial);
            const auto records = monitor(artifacts, inject_fault(base, fault, stdevs));
            const auto res = evaluate(records, 600, 3, to_string(kind));
            const bool f_ok = res.fdd && *res.fdd <= 100;
            const bool r_ok = res.fdr.value_or(0.0) >= 0.8;
            if (res.detected) { ++det; fdd_sum += *res.fdd; }
            fdr_sum += res.fdr.value_or(0.0);
            fdd_ok += f_ok; fdr_ok += r_ok; both += (f_ok && r_ok);
        }
        std::printf("  %-18s both-ok %d/%d  (FDD ok %d, mean %.0f; FDR ok %d, mean %.3f)\n",
                    to_string(kind).c_str(), both, trials, fdd_ok, det ? fdd_sum / det : -1,
                    fdr_ok, fdr_sum / trials);
    }
    return 0;
}
