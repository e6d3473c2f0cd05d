#pragma once

#include "nphawkes/hawkes_model.hpp"

#include <Eigen/Core>

#include <vector>

namespace nphawkes {

/// S x N matrix: one posterior draw of a post-link field per row, one grid node per column.
struct PosteriorFieldSamples {
    Eigen::MatrixXd samples;

    Eigen::VectorXd mean() const;
    /// Per-node variance across draws with divisor S.
    Eigen::VectorXd variance() const;
};

/// mean_n (mean_s f_sn - truth_n)^2
double pm_mse(const PosteriorFieldSamples& samples, const Eigen::VectorXd& truth);

/// mean_n mean_s (f_sn - truth_n)^2
double pe_mse(const PosteriorFieldSamples& samples, const Eigen::VectorXd& truth);

double mean_posterior_variance(const PosteriorFieldSamples& samples);

/// Mean of the log-likelihood over posterior draws of the rates.
double expected_log_likelihood(const std::vector<IntensityValues>& draws, const PreparedData& data);

}  // namespace nphawkes
