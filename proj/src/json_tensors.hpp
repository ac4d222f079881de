#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <vector>

#include "mbmon/common.hpp"

namespace mbmon::detail {

inline nlohmann::ordered_json tensor_to_json(const Eigen::MatrixXd& m) {
    nlohmann::ordered_json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            data.push_back(m(r, c));
        }
    }
    j["data"] = data;
    return j;
}

inline nlohmann::ordered_json tensor_to_json(const Eigen::VectorXd& v) {
    nlohmann::ordered_json j;
    j["rows"] = v.size();
    j["cols"] = 1;
    j["data"] = std::vector<double>(v.data(), v.data() + v.size());
    return j;
}

inline Eigen::MatrixXd tensor_from_json(const nlohmann::json& j) {
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw DataError("json: tensor data length does not match shape");
    }
    Eigen::MatrixXd m(rows, cols);
    std::size_t idx = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = data[idx++];
        }
    }
    return m;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::MatrixXd m = tensor_from_json(j);
    if (m.cols() != 1) {
        throw DataError("json: expected a column vector");
    }
    return m.col(0);
}

}  // namespace mbmon::detail
