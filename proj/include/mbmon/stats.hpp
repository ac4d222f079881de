#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "mbmon/common.hpp"

namespace mbmon {

/// Hotelling T^2 scorer over latent codes.
struct T2Model {
    Eigen::MatrixXd covariance;  // m x m, population covariance of codes
    Eigen::MatrixXd precision;   // regularized inverse
    double limit = std::numeric_limits<double>::quiet_NaN();  // set by kde_limit
};

/// Per-stream in-control quantile cut points. Cell l is (q_{l-1}, q_l], with
/// open ends at +-infinity.
struct QuantileGrid {
    std::vector<Eigen::VectorXd> cuts;  // one sorted (d-1)-vector per stream
    int d = 0;

    int stream_count() const { return static_cast<int>(cuts.size()); }
};

enum class CusumForm {
    paper,        // quadratic form exactly as printed
    qiu_hawkins,  // classical (S0 - S1) arrangement
};

struct CusumConfig {
    int d = 5;
    double k = 0.1;                                           // allowance
    double h = std::numeric_limits<double>::quiet_NaN();      // global threshold
    int r = 0;                                                // top-r count
    CusumForm form = CusumForm::paper;
    Eigen::VectorXd e_plus;   // E(A+), entries 1 - l/d
    Eigen::VectorXd e_minus;  // E(A-), entries l/d

    /// Fills e_plus/e_minus from d and defaults r to ceil(streams/2) when
    /// unset.
    void finalize(int streams);
    void validate(int streams) const;
};

/// Recursion state for one stream's two-sided CUSUM.
struct CusumStreamState {
    Eigen::VectorXd s_plus0, s_plus1;    // upward-shift accumulators
    Eigen::VectorXd s_minus0, s_minus1;  // downward-shift accumulators
    double c_plus = 0.0, c_minus = 0.0;  // last quadratic-form values
    double w = 0.0;                      // last local statistic max(W-, W+)
};

struct CusumState {
    std::vector<CusumStreamState> streams;
    double global = 0.0;  // last top-r sum

    static CusumState zero(int streams, int d);
};

/// Population covariance plus regularized precision; requires n > m rows.
T2Model fit_t2(const Eigen::MatrixXd& codes);

/// c * precision * c^T.
double t2_score(const T2Model& model, const Eigen::VectorXd& c);

struct KdeLimitResult {
    double limit = 0.0;
    bool degenerate = false;  // zero-variance scores; limit = max(scores)
};

/// Control limit at `confidence` from a Gaussian-kernel density with
/// Silverman bandwidth, CDF numerically integrated on a 2048-point grid.
KdeLimitResult kde_limit(const Eigen::VectorXd& scores, double confidence);

/// Empirical l/d quantiles per stream (midpoint interpolation). Verifies the
/// cell-occupancy invariant on the calibration data; heavily tied data fails
/// with a degenerate-grid error.
QuantileGrid fit_quantile_grid(const Eigen::MatrixXd& calib, int d);

/// One-hot cell membership of value g in stream x (left-open, right-closed
/// cells; ties on a cut point go to the lower cell).
Eigen::VectorXd categorize(const QuantileGrid& grid, double g, int stream);

/// A-[l] = sum_{i<=l} Y[i]; A+[l] = 1 - A-[l].
std::pair<Eigen::VectorXd, Eigen::VectorXd> accumulate_a(const Eigen::VectorXd& y);

/// Advances one stream's recursion and returns its local statistic W_x.
double cusum_update(CusumStreamState& state, const Eigen::VectorXd& a_plus,
                    const Eigen::VectorXd& a_minus, const CusumConfig& cfg);

/// Sum of the r largest local statistics.
double global_cusum(const CusumState& state, int r);

/// Convenience: categorize every stream of a reading, advance all recursions
/// and refresh the global statistic.
double cusum_step(CusumState& state, const QuantileGrid& grid, const Eigen::VectorXd& reading,
                  const CusumConfig& cfg);

/// Monte Carlo threshold: (1 - target_far) empirical quantile of the
/// per-step global statistic over bootstrap-resampled in-control streams.
/// `block_len` > 1 switches to a moving-block bootstrap that preserves the
/// serial dependence of the calibration rows (needed when readings come from
/// overlapping windows); 1 resamples single rows.
double calibrate_threshold(const Eigen::MatrixXd& in_control, const QuantileGrid& grid,
                           const CusumConfig& cfg, double target_far, int n_reps, int horizon,
                           std::uint64_t seed, int block_len = 1);

struct CalibrationMeta {
    std::uint64_t seed = 0;
    int n_reps = 0;
    int horizon = 0;
    double target_far = 0.0;
    double t2_confidence = 0.0;
    double b_lim_confidence = 0.0;
};

/// Everything the online stage needs per block besides the model itself.
/// Codes are centered by `code_mean` (the in-control validation mean) before
/// any statistic sees them.
struct StatsBundle {
    Eigen::VectorXd code_mean;
    T2Model t2;
    QuantileGrid grid;
    CusumConfig cusum;
    double b_lim = 0.0;
    CalibrationMeta calibration;
};

std::string stats_to_json(const StatsBundle& bundle);
StatsBundle stats_from_json(const std::string& text);

}  // namespace mbmon
