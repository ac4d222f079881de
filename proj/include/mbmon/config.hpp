#pragma once

#include <map>
#include <string>
#include <vector>

#include "mbmon/core.hpp"
#include "mbmon/pipeline.hpp"
#include "mbmon/simgen.hpp"

namespace mbmon {

struct SimulateConfig {
    int t_train = 8000;   // in-control stream length
    int t_test = 2400;    // faulted / held-out stream length
    int onset = 600;      // first faulty sample
    double magnitude = 3.0;
    std::map<FaultKind, std::vector<int>> targets;  // per-kind target variables

    static SimulateConfig defaults();
};

/// One JSON document drives every command; flags override single fields.
struct RunConfig {
    std::string in_control_path = "out/in_control.csv";
    std::string out_dir = "out";
    BlockPartition partition;
    PipelineConfig pipeline;
    SimulateConfig simulate;

    static RunConfig defaults();
    void validate() const;
};

/// Strict parse: unknown keys are rejected, every value is type- and
/// range-checked against the published schema (docs/config.schema.json).
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& config);

}  // namespace mbmon
