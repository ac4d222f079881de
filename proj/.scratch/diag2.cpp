#include <cstdio>
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

int main() {
    RunConfig config = RunConfig::defaults();
    config.pipeline.train.epochs = 30;
    config.pipeline.jobs = 4;
    config.pipeline.seed = 1234;
    const ProcessSpec spec = ProcessSpec::default_benchmark(mix_seed(1234, "process-spec"));
    const auto in_control = generate(spec, 8000, mix_seed(1234, "in-control"));
    const auto stdevs = column_stdevs(in_control);
    auto artifacts = offline_learn(in_control, config.partition, config.pipeline);

    const auto base = generate(spec, 1200, mix_seed(888, "trial", 7));
    FaultSpec fault{FaultKind::step, {7}, 3.0, 600, 4};
    const auto faulted = inject_fault(base, fault, stdevs);
    const auto standardized = apply_standardizer(artifacts.standardizer, faulted);
    const auto blocks = partition(standardized, artifacts.partition);

    // Block 2 codes pre vs post onset.
    const auto& model = artifacts.blocks[1].model;
    const auto ds = make_windows(blocks[1], 20, 1);
    Eigen::MatrixXd pre(300, 5), post(300, 5);
    for (int i = 0; i < 300; ++i) {
        pre.row(i) = encode(model, ds.window(250 + i)).transpose();     // steps 269..569
        post.row(i) = encode(model, ds.window(681 + i)).transpose();    // steps 700..1000
    }
    std::printf("block2 channel   pre-mean  pre-std   post-mean post-std   shift(in pre-std units)\n");
    for (int j = 0; j < 5; ++j) {
        const double pm = pre.col(j).mean();
        const double ps = std::sqrt((pre.col(j).array() - pm).square().mean());
        const double qm = post.col(j).mean();
        const double qs = std::sqrt((post.col(j).array() - qm).square().mean());
        std::printf("          %d      %8.4f %8.4f   %8.4f %8.4f   %8.2f\n", j, pm, ps, qm, qs,
                    (qm - pm) / std::max(ps, 1e-12));
    }

    // Raw standardized input shift for block 2 columns.
    std::printf("block2 input col shifts (standardized units): ");
    for (int c : {6, 7, 8, 20, 29}) {
        const double pm = standardized.values.col(c).segment(250, 300).mean();
        const double qm = standardized.values.col(c).segment(700, 300).mean();
        std::printf("v%d:%.2f ", c, qm - pm);
    }
    std::printf("\n");
    return 0;
}
