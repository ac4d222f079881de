#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "mbmon/common.hpp"

namespace mbmon {

/// Time-indexed matrix of process measurements. Rows are samples, columns
/// are named variables. Immutable by convention once built.
struct StreamMatrix {
    std::vector<std::string> variable_names;
    Eigen::MatrixXd values;          // T x p
    double sample_period = 1.0;      // minutes per sample

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }

    /// Checks name/column consistency and uniqueness. Throws DataError.
    void validate() const;
};

/// Ordered assignment of variable columns to disjoint blocks.
struct BlockPartition {
    // (block_id, column indices). Ids are kept as given (typically 1-based).
    std::vector<std::pair<int, std::vector<int>>> blocks;

    int block_count() const { return static_cast<int>(blocks.size()); }

    /// Disjointness and non-emptiness; throws ConfigError on violation.
    void validate() const;
};

/// Per-column affine transform fitted on in-control data.
struct Standardizer {
    std::vector<std::string> variable_names;
    Eigen::VectorXd means;
    Eigen::VectorXd stdevs;                 // constant columns get 1.0
    std::vector<std::uint8_t> constant_flags;
};

/// Sliding windows over a stream slice. Windows are contiguous row ranges of
/// `source`; the reconstruction target of window i is the window itself.
class WindowedDataset {
public:
    WindowedDataset(Eigen::MatrixXd source, int window_len, int stride);

    int size() const { return static_cast<int>(starts_.size()); }
    int window_len() const { return window_len_; }
    int stride() const { return stride_; }
    Eigen::Index dim() const { return source_.cols(); }

    /// Row index of the first sample in window i.
    int start(int i) const { return starts_[static_cast<std::size_t>(i)]; }

    Eigen::Block<const Eigen::MatrixXd> window(int i) const {
        return source_.middleRows(start(i), window_len_);
    }
    /// Autoencoding: the target equals the input window.
    Eigen::Block<const Eigen::MatrixXd> target(int i) const { return window(i); }

private:
    Eigen::MatrixXd source_;
    std::vector<int> starts_;
    int window_len_;
    int stride_;
};

/// Fits per-column mean and population standard deviation. Columns with
/// stdev below 1e-12 are flagged constant and their stdev replaced by 1 so
/// stuck sensors still flow through monitoring.
Standardizer fit_standardizer(const StreamMatrix& data);

/// out[t, j] = (in[t, j] - mean[j]) / stdev[j]. Column names must match.
StreamMatrix apply_standardizer(const Standardizer& s, const StreamMatrix& data);

/// Inverse of apply_standardizer.
StreamMatrix invert_standardizer(const Standardizer& s, const StreamMatrix& data);

/// Splits a stream column-wise per the partition. Row count is preserved;
/// block n holds exactly the columns listed for block n, in listed order.
std::vector<StreamMatrix> partition(const StreamMatrix& data, const BlockPartition& p);

/// Builds floor((T - L) / stride) + 1 windows. Throws DataError when T < L.
WindowedDataset make_windows(const StreamMatrix& data, int window_len, int stride);

}  // namespace mbmon
