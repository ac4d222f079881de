#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mbmon/core.hpp"

namespace mbmon {

/// One block of the surrogate process: stable linear state dynamics with a
/// tanh-squashed output map.
struct BlockDynamics {
    Eigen::MatrixXd dynamics;    // state x state, spectral radius < 0.95
    Eigen::MatrixXd output_map;  // variables x state
    double process_noise = 0.3;
};

struct ProcessSpec {
    std::vector<BlockDynamics> blocks;
    Eigen::MatrixXd coupling;        // N x N coefficients, zero diagonal
    double measurement_noise = 0.1;
    int burn_in = 200;
    std::uint64_t structure_seed = 0;  // seed the matrices were drawn from
    std::vector<std::string> variable_names;
    // Final stream column index of each block variable; empty lays blocks
    // out contiguously.
    std::vector<std::vector<int>> column_layout;

    int block_count() const { return static_cast<int>(blocks.size()); }
    int variable_count() const;
    int state_count() const;

    /// Enforces the per-block spectral-radius constraint and checks the
    /// coupled joint system stays stable. Throws ConfigError.
    void validate() const;

    /// 4 blocks of 8/5/10/8 variables with weak chain coupling.
    static ProcessSpec default_benchmark(std::uint64_t structure_seed);
};

enum class FaultKind { step, random_variation, slow_drift, sticking };

FaultKind fault_kind_from_string(const std::string& name);
std::string to_string(FaultKind kind);

struct FaultSpec {
    FaultKind kind = FaultKind::step;
    std::vector<int> targets;    // variable column indices
    double magnitude = 0.0;      // in units of in-control stdev
    int onset = 0;               // first faulty sample index
    std::uint64_t seed = 0;      // drives the random_variation draws

    void validate(Eigen::Index rows, Eigen::Index cols) const;
};

double spectral_radius(const Eigen::MatrixXd& m);

/// Simulates T samples after burn-in from zero initial state. Deterministic
/// under (spec, seed).
StreamMatrix generate(const ProcessSpec& spec, int t_len, std::uint64_t seed);

/// Applies a measurement-space fault. step: additive magnitude*stdev from
/// onset; random_variation: additive N(0, (magnitude*stdev)^2) noise;
/// slow_drift: additive ramp reaching magnitude*stdev at the last sample;
/// sticking: target frozen at its onset value.
StreamMatrix inject_fault(const StreamMatrix& stream, const FaultSpec& fault,
                          const Eigen::VectorXd& in_control_stdevs);

/// Autocorrelation-adjusted comparison of first/second half moments, in
/// standard-error units (values below ~3 indicate stationarity).
struct StationarityReport {
    double max_mean_z = 0.0;
    double max_var_z = 0.0;
};
StationarityReport stationarity_check(const StreamMatrix& stream);

/// CSV schema: header row, first column sample_index, one column per
/// variable, '.' decimals, 17-significant-digit values.
void write_csv(const StreamMatrix& stream, const std::string& path);

/// Loads a CSV; malformed rows raise DataError with their line number,
/// rows with non-finite values are dropped (count returned via warning).
StreamMatrix load_csv(const std::string& path);

struct StreamMeta {
    std::uint64_t seed = 0;
    std::string spec_hash;
    std::optional<FaultSpec> fault;
    std::optional<int> onset;
};

/// Sidecar path: <name>.csv -> <name>.meta.json
std::string meta_path_for(const std::string& csv_path);
void write_meta(const std::string& csv_path, const StreamMeta& meta);
std::optional<StreamMeta> load_meta(const std::string& csv_path);

std::string spec_hash(const ProcessSpec& spec);

}  // namespace mbmon
