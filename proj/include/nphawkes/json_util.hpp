#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cmath>
#include <vector>

namespace nphawkes {

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::isfinite(v[i])) {
            out.push_back(v[i]);
        } else {
            out.push_back(nullptr);
        }
    }
    return out;
}

inline nlohmann::json vector_json(const std::vector<double>& v) {
    return vector_json(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vector_json(Eigen::VectorXd(m.row(i))));
    return out;
}

inline Eigen::VectorXd json_vector(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = j[i].is_null() ? NAN : j[i].get<double>();
    }
    return v;
}

}  // namespace nphawkes
