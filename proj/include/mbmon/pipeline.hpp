#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mbmon/core.hpp"
#include "mbmon/fusion.hpp"
#include "mbmon/olae.hpp"
#include "mbmon/stats.hpp"

namespace mbmon {

enum class AblationMode {
    full,      // complete pipeline
    no_bf,     // fixed equal weights at both fusion levels
    no_cusum,  // block fusion over T^2 alone
};

AblationMode ablation_from_string(const std::string& name);
std::string to_string(AblationMode mode);

/// Every knob of the offline/online pipeline. Defaults follow the project
/// configuration reference.
struct PipelineConfig {
    // Windowing and model size.
    int window = 20;
    int hidden = 16;
    int latent = 5;

    // Training (seed is derived per block from `seed`).
    TrainConfig train;

    // Per-block monitoring statistics.
    int quantiles = 5;      // d
    double allowance = 2.5; // k
    int top_r = 0;          // 0 -> ceil(latent / 2)
    CusumForm cusum_form = CusumForm::paper;
    double t2_confidence = 0.99;
    double target_far = 0.0027;
    int calib_reps = 200;
    int calib_horizon = 2400;

    // Fusion.
    double alpha = 0.01;
    double alarm_threshold = -1.0;  // negative -> use alpha
    double b_lim_confidence = 0.99;
    int sustain = 3;

    // Run control.
    AblationMode ablation = AblationMode::full;
    std::uint64_t seed = 1234;
    int jobs = 1;
    double train_fraction = 0.7;

    double effective_alarm_threshold() const {
        return alarm_threshold < 0.0 ? alpha : alarm_threshold;
    }
    void validate() const;
};

std::string pipeline_config_to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const std::string& text);

/// Everything one block needs online.
struct BlockArtifacts {
    int block_id = 0;
    OlaeModel model;
    StatsBundle stats;  // T^2 with limit, grid, CUSUM config with h, b_lim
};

struct PlantArtifacts {
    Standardizer standardizer;
    BlockPartition partition;
    std::vector<BlockArtifacts> blocks;
    PipelineConfig config;
    bool baseline = false;  // ortho weight was zero
};

struct BlockRecord {
    double t2 = 0.0;
    double w = 0.0;  // NaN under no_cusum
    double b = 0.0;
    double weight_t2 = 0.0;
    double weight_cusum = 0.0;  // NaN under no_cusum
    bool exceed = false;        // b > b_lim
};

struct MonitorRecord {
    long t = 0;  // sample index in the monitored stream
    std::vector<BlockRecord> blocks;
    Eigen::VectorXd block_weights;
    double pfi = 0.0;
    bool alarm_raw = false;
    bool alarm_sustained = false;  // trailing `sustain` consecutive raw alarms
};

struct TrainingLog {
    std::vector<std::pair<int, std::vector<LossBreakdown>>> per_block;  // (block_id, history)
};

/// Offline learning: standardize, chronological 70/30 split, per-block
/// training, limit calibration on validation codes, fused-limit fitting.
PlantArtifacts offline_learn(const StreamMatrix& in_control, const BlockPartition& partition,
                             const PipelineConfig& config, TrainingLog* log = nullptr);

/// Shares the trained models and validation statistics across ablation
/// modes; only mode-dependent calibration is recomputed. Order matches
/// `modes`.
std::vector<PlantArtifacts> offline_learn_modes(const StreamMatrix& in_control,
                                                const BlockPartition& partition,
                                                const PipelineConfig& config,
                                                const std::vector<AblationMode>& modes,
                                                TrainingLog* log = nullptr);

/// Online monitoring: one record per sample from t = window-1 on. A stream
/// shorter than the window yields zero records and a warm-up warning.
std::vector<MonitorRecord> monitor(const PlantArtifacts& artifacts, const StreamMatrix& stream);

struct EvalCase {
    std::string label;
    std::optional<int> onset;
    std::optional<long> fdd;              // sustained (run-start) detection delay
    std::optional<long> fdd_first_alarm;  // per-step delay, for comparison
    std::optional<double> fdr;            // post-onset raw-alarm fraction
    std::optional<double> far;            // pre-onset (or whole-stream) fraction
    bool detected = false;
    int sustain = 3;
};

/// FDD/FDR/FAR per the sustained-alarm convention. Without an onset the
/// whole stream counts as in-control and only FAR is reported.
EvalCase evaluate(const std::vector<MonitorRecord>& records, std::optional<int> onset,
                  int sustain_m, const std::string& label);

/// Report rows: one line per case (fault id, FDD, FDR, FAR); "--" marks
/// faults never detected.
void write_report_csv(const std::vector<EvalCase>& cases, const std::string& path);
void write_report_json(const std::vector<EvalCase>& cases, const std::string& path);

void write_records_csv(const std::vector<MonitorRecord>& records, const PlantArtifacts& artifacts,
                       const std::string& path);

/// Parses a records CSV back into (partial) MonitorRecords; requires the
/// PLANT rows with the fused index column.
std::vector<MonitorRecord> read_records_csv(const std::string& path);

void save_artifacts(const PlantArtifacts& artifacts, const std::string& dir);
PlantArtifacts load_artifacts(const std::string& dir);

}  // namespace mbmon
