#include "mbmon/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace mbmon {

void StreamMatrix::validate() const {
    if (static_cast<Eigen::Index>(variable_names.size()) != values.cols()) {
        throw DataError("stream: " + std::to_string(variable_names.size()) +
                        " variable names for " + std::to_string(values.cols()) + " columns");
    }
    std::set<std::string> seen;
    for (const auto& name : variable_names) {
        if (!seen.insert(name).second) {
            throw DataError("stream: duplicate variable name '" + name + "'");
        }
    }
    if (sample_period <= 0.0) {
        throw DataError("stream: sample_period must be positive");
    }
}

void BlockPartition::validate() const {
    if (blocks.empty()) {
        throw ConfigError("partition: needs at least one block");
    }
    std::set<int> seen;
    for (const auto& [id, cols] : blocks) {
        if (cols.empty()) {
            throw ConfigError("partition: block " + std::to_string(id) + " is empty");
        }
        for (int c : cols) {
            if (c < 0) {
                throw ConfigError("partition: negative column index in block " +
                                  std::to_string(id));
            }
            if (!seen.insert(c).second) {
                throw ConfigError("partition: column " + std::to_string(c) +
                                  " assigned to more than one block");
            }
        }
    }
}

WindowedDataset::WindowedDataset(Eigen::MatrixXd source, int window_len, int stride)
    : source_(std::move(source)), window_len_(window_len), stride_(stride) {
    if (window_len_ < 1 || stride_ < 1) {
        throw ConfigError("windows: window_len and stride must be >= 1");
    }
    const auto t = source_.rows();
    if (t < window_len_) {
        throw DataError("windows: stream has " + std::to_string(t) +
                        " rows, shorter than window length " + std::to_string(window_len_));
    }
    const int count = static_cast<int>((t - window_len_) / stride_) + 1;
    starts_.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        starts_.push_back(i * stride_);
    }
}

Standardizer fit_standardizer(const StreamMatrix& data) {
    data.validate();
    const auto t = data.rows();
    if (t < 2) {
        throw DataError("standardizer: needs at least 2 rows, got " + std::to_string(t));
    }
    Standardizer s;
    s.variable_names = data.variable_names;
    s.means = data.values.colwise().mean();
    // Population formula: divide by T.
    Eigen::MatrixXd centered = data.values.rowwise() - s.means.transpose();
    Eigen::VectorXd var = centered.array().square().colwise().sum() / static_cast<double>(t);
    s.stdevs = var.array().sqrt();
    s.constant_flags.assign(static_cast<std::size_t>(data.cols()), 0);
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
        if (s.stdevs[j] < 1e-12) {
            s.stdevs[j] = 1.0;
            s.constant_flags[static_cast<std::size_t>(j)] = 1;
        }
    }
    return s;
}

namespace {

void check_schema(const Standardizer& s, const StreamMatrix& data) {
    if (s.variable_names != data.variable_names) {
        std::ostringstream msg;
        msg << "standardizer: column schema mismatch (fitted " << s.variable_names.size()
            << " columns, got " << data.variable_names.size() << ")";
        throw DataError(msg.str());
    }
}

}  // namespace

StreamMatrix apply_standardizer(const Standardizer& s, const StreamMatrix& data) {
    check_schema(s, data);
    StreamMatrix out = data;
    out.values = (data.values.rowwise() - s.means.transpose()).array().rowwise() /
                 s.stdevs.transpose().array();
    return out;
}

StreamMatrix invert_standardizer(const Standardizer& s, const StreamMatrix& data) {
    check_schema(s, data);
    StreamMatrix out = data;
    out.values = (data.values.array().rowwise() * s.stdevs.transpose().array()).matrix()
                     .rowwise() +
                 s.means.transpose();
    return out;
}

std::vector<StreamMatrix> partition(const StreamMatrix& data, const BlockPartition& p) {
    p.validate();
    for (const auto& [id, cols] : p.blocks) {
        for (int c : cols) {
            if (c >= data.cols()) {
                throw ConfigError("partition: block " + std::to_string(id) + " references column " +
                                  std::to_string(c) + " but stream has only " +
                                  std::to_string(data.cols()) + " columns");
            }
        }
    }
    std::vector<StreamMatrix> out;
    out.reserve(p.blocks.size());
    for (const auto& [id, cols] : p.blocks) {
        StreamMatrix block;
        block.sample_period = data.sample_period;
        block.values.resize(data.rows(), static_cast<Eigen::Index>(cols.size()));
        block.variable_names.reserve(cols.size());
        for (std::size_t j = 0; j < cols.size(); ++j) {
            block.values.col(static_cast<Eigen::Index>(j)) = data.values.col(cols[j]);
            block.variable_names.push_back(data.variable_names[static_cast<std::size_t>(cols[j])]);
        }
        out.push_back(std::move(block));
    }
    return out;
}

WindowedDataset make_windows(const StreamMatrix& data, int window_len, int stride) {
    return WindowedDataset(data.values, window_len, stride);
}

}  // namespace mbmon
