#include "nphawkes/metrics_eval.hpp"

#include <stdexcept>

namespace nphawkes {

namespace {

void check(const PosteriorFieldSamples& s, const Eigen::VectorXd& truth) {
    if (s.samples.rows() < 1) throw std::invalid_argument("metrics need at least one posterior draw");
    if (s.samples.cols() != truth.size()) {
        throw std::invalid_argument("posterior samples and truth have different lengths");
    }
}

}  // namespace

Eigen::VectorXd PosteriorFieldSamples::mean() const {
    return samples.colwise().mean().transpose();
}

Eigen::VectorXd PosteriorFieldSamples::variance() const {
    const Eigen::RowVectorXd m = samples.colwise().mean();
    return (samples.rowwise() - m).cwiseAbs2().colwise().mean().transpose();
}

double pm_mse(const PosteriorFieldSamples& s, const Eigen::VectorXd& truth) {
    check(s, truth);
    return (s.mean() - truth).squaredNorm() / static_cast<double>(truth.size());
}

double pe_mse(const PosteriorFieldSamples& s, const Eigen::VectorXd& truth) {
    check(s, truth);
    return (s.samples.rowwise() - truth.transpose()).cwiseAbs2().mean();
}

double mean_posterior_variance(const PosteriorFieldSamples& s) {
    if (s.samples.rows() < 1) throw std::invalid_argument("metrics need at least one posterior draw");
    return s.variance().mean();
}

double expected_log_likelihood(const std::vector<IntensityValues>& draws, const PreparedData& data) {
    if (draws.empty()) throw std::invalid_argument("expected log-likelihood needs at least one draw");
    double total = 0.0;
    for (const auto& d : draws) total += log_likelihood(data, d);
    return total / static_cast<double>(draws.size());
}

}  // namespace nphawkes
