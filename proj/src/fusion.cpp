#include "mbmon/fusion.hpp"

#include <cmath>

namespace mbmon {

namespace {

using Eigen::VectorXd;

// Normalized exp((S - S_lim)/S_lim) weights with max-subtraction so large
// exceedances cannot overflow.
VectorXd exceedance_weights(const std::vector<double>& scores) {
    VectorXd z(static_cast<Eigen::Index>(scores.size()));
    for (std::size_t i = 0; i < scores.size(); ++i) {
        z[static_cast<Eigen::Index>(i)] = scores[i];
    }
    const double zmax = z.maxCoeff();
    VectorXd w = (z.array() - zmax).exp();
    return w / w.sum();
}

}  // namespace

std::pair<double, double> metric_probabilities(const MetricReading& r) {
    if (r.limit <= 0.0) {
        throw ConfigError("fusion: metric limit must be strictly positive");
    }
    if (r.value < 0.0) {
        throw DataError("fusion: metric value must be >= 0");
    }
    if (r.value == 0.0) {
        return {1.0, 0.0};  // continuity limit of Eq. forms at S = 0
    }
    const double p_normal = std::exp(-r.value / r.limit);
    const double p_fault = std::exp(-r.limit / r.value);
    return {p_normal, p_fault};
}

double posterior_fault(double p_normal, double p_fault, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw ConfigError("fusion: alpha must lie in (0, 1)");
    }
    if (p_normal < 0.0 || p_normal > 1.0 || p_fault < 0.0 || p_fault > 1.0) {
        throw DataError("fusion: probabilities must lie in [0, 1]");
    }
    if (p_fault == 0.0 && p_normal == 0.0) {
        throw NumericError("fusion: posterior undefined for pN = pF = 0");
    }
    if (p_fault == 0.0) {
        return 0.0;
    }
    // Ratio form: cancels exactly when pN == pF, so at-limit inputs give
    // back alpha to machine precision.
    return alpha / (alpha + (1.0 - alpha) * (p_normal / p_fault));
}

Eigen::VectorXd metric_weights(const std::vector<MetricReading>& readings) {
    if (readings.empty()) {
        throw DataError("fusion: needs at least one metric reading");
    }
    std::vector<double> z;
    z.reserve(readings.size());
    for (const auto& r : readings) {
        if (r.limit <= 0.0) {
            throw ConfigError("fusion: metric limit must be strictly positive");
        }
        z.push_back((r.value - r.limit) / r.limit);
    }
    return exceedance_weights(z);
}

BlockFused fuse_block(const std::vector<MetricReading>& readings, double alpha, bool adaptive) {
    if (readings.empty()) {
        throw DataError("fusion: needs at least one metric reading");
    }
    BlockFused fused;
    fused.weights = adaptive
                        ? metric_weights(readings)
                        : VectorXd::Constant(static_cast<Eigen::Index>(readings.size()),
                                             1.0 / static_cast<double>(readings.size()));
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < readings.size(); ++i) {
        const auto [p_normal, p_fault] = metric_probabilities(readings[i]);
        const double post = posterior_fault(p_normal, p_fault, alpha);
        const double wpf = fused.weights[static_cast<Eigen::Index>(i)] * p_fault;
        num += wpf * post;
        den += wpf;
    }
    fused.b = (den > 0.0) ? num / den : 0.0;  // all evidence at S = 0
    return fused;
}

PlantIndex fuse_plant(const std::vector<std::pair<double, double>>& blocks, double alpha,
                      double alarm_threshold, bool adaptive) {
    if (blocks.empty()) {
        throw DataError("fusion: needs at least one block");
    }
    PlantIndex plant;
    if (adaptive) {
        std::vector<double> z;
        z.reserve(blocks.size());
        for (const auto& [b, b_lim] : blocks) {
            if (b_lim <= 0.0) {
                throw ConfigError("fusion: block limit must be strictly positive");
            }
            z.push_back((b - b_lim) / b_lim);
        }
        plant.weights = exceedance_weights(z);
    } else {
        plant.weights = VectorXd::Constant(static_cast<Eigen::Index>(blocks.size()),
                                           1.0 / static_cast<double>(blocks.size()));
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t n = 0; n < blocks.size(); ++n) {
        MetricReading as_reading;
        as_reading.value = blocks[n].first;
        as_reading.limit = blocks[n].second;
        const auto [p_normal, p_fault] = metric_probabilities(as_reading);
        const double post = posterior_fault(p_normal, p_fault, alpha);
        const double wpf = plant.weights[static_cast<Eigen::Index>(n)] * p_fault;
        num += wpf * post;
        den += wpf;
    }
    plant.pfi = (den > 0.0) ? num / den : 0.0;
    plant.alarm = plant.pfi > alarm_threshold;
    return plant;
}

KdeLimitResult fit_block_limit(const Eigen::VectorXd& validation_b, double confidence) {
    if (validation_b.size() < 100) {
        throw DataError("fit_block_limit: needs at least 100 in-control values, got " +
                        std::to_string(validation_b.size()));
    }
    return kde_limit(validation_b, confidence);
}

}  // namespace mbmon
