#pragma once

#include "nphawkes/hawkes_model.hpp"
#include "nphawkes/vi.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nphawkes {

/// Vectorised conditional intensity lambda(q | history).
using IntensityFunction = std::function<Eigen::VectorXd(std::span<const Point3>)>;

/// lambda(q) = mu(q) + sum over earlier events with lag in the support of phi(q - event).
/// `phi` may be null for a pure background model.
IntensityFunction conditional_intensity(std::shared_ptr<const RateField> mu,
                                        std::shared_ptr<const RateField> phi,
                                        const EventSequence& history,
                                        const SpatioTemporalWindow& window);

struct ResidualProcess {
    std::vector<Point3> events;   ///< sorted by time
    std::vector<bool> retained;   ///< true for observed events that survived thinning
    double k{0.0};
    std::size_t n_retained{0};
    std::size_t n_simulated{0};
};

/// Median of the intensity over the probe points.
double median_rate(const IntensityFunction& lambda, std::span<const Point3> probe);

/// Keeps event i with probability min(k / lambda_i, 1) and adds a Poisson process with rate
/// max(k - lambda, 0) over the window.
ResidualProcess super_thin(const EventSequence& data, const IntensityFunction& lambda,
                           const SpatioTemporalWindow& window, double k, std::uint64_t seed);

struct TestResult {
    double statistic{0.0};
    double p_value{1.0};
};

/// Asymptotic Kolmogorov tail P(K > x), series truncated at 100 terms.
double kolmogorov_tail(double x);

/// KS test of the inter-arrival times against Exp(N / t_max).
TestResult ks_exponential_test(const ResidualProcess& residual, double t_max);

struct QuadratResult {
    double chi2{0.0};
    double p_value{1.0};
    int n_grid_effective{1};
    std::vector<std::string> warnings;
};

/// Equal-area quadrat counts of the residual locations; the grid is halved until every cell
/// expects at least five points.
QuadratResult quadrat_chi2_test(const ResidualProcess& residual, const SpatioTemporalWindow& window,
                                int n_grid = 8);

}  // namespace nphawkes
