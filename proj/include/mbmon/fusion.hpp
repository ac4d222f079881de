#pragma once

#include <Eigen/Dense>

#include <vector>

#include "mbmon/common.hpp"
#include "mbmon/stats.hpp"

namespace mbmon {

enum class MetricId { t2, cusum };

/// Current value and control limit of one monitoring metric in one block.
struct MetricReading {
    double value = 0.0;  // S >= 0
    double limit = 1.0;  // S_lim > 0
    MetricId metric = MetricId::t2;
    int block_id = 0;
};

struct FusionConfig {
    double alpha = 0.01;  // significance level; priors are P(F)=alpha, P(N)=1-alpha
};

/// Fused block statistic with the metric weights that produced it.
struct BlockFused {
    double b = 0.0;            // in [0, 1]
    Eigen::VectorXd weights;   // per metric, sums to 1
    double b_lim = 0.0;        // control limit for b, fit on validation data
};

struct PlantIndex {
    double pfi = 0.0;          // in [0, 1]
    Eigen::VectorXd weights;   // per block, sums to 1
    bool alarm = false;        // pfi strictly above the alarm threshold
};

/// Likelihoods under normal and fault conditions:
/// pN = exp(-S/S_lim), pF = exp(-S_lim/S), with the S = 0 limit (1, 0).
std::pair<double, double> metric_probabilities(const MetricReading& r);

/// Bayes posterior of fault: pF*alpha / (pF*alpha + pN*(1-alpha)).
double posterior_fault(double p_normal, double p_fault, double alpha);

/// Exceedance-weighted metric weights: w_i = exp((S_i - S_lim)/S_lim),
/// normalized to sum 1.
Eigen::VectorXd metric_weights(const std::vector<MetricReading>& readings);

/// Fused block statistic per the adaptive scheme. With `adaptive` false the
/// exceedance weights are replaced by equal weights (fusion ablation).
BlockFused fuse_block(const std::vector<MetricReading>& readings, double alpha,
                      bool adaptive = true);

/// Same scheme one level up over (B, B_lim) pairs; alarm when the fused
/// index strictly exceeds `alarm_threshold`.
PlantIndex fuse_plant(const std::vector<std::pair<double, double>>& blocks, double alpha,
                      double alarm_threshold, bool adaptive = true);

/// Control limit for a block's fused statistic: KDE limit on an in-control
/// validation series.
KdeLimitResult fit_block_limit(const Eigen::VectorXd& validation_b, double confidence = 0.99);

}  // namespace mbmon
