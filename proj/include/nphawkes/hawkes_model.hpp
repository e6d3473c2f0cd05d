#pragma once

#include "nphawkes/geometry.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nphawkes {

/// Observation window W = [0,T]x[0,X]x[0,Y] and trigger support [0,T_phi]x[-X_phi,X_phi]x[-Y_phi,Y_phi].
struct SpatioTemporalWindow {
    double T{10.0}, X{10.0}, Y{10.0};
    double T_phi{0.5}, X_phi{0.3}, Y_phi{0.3};

    void validate() const;
    Box domain() const noexcept { return {{0.0, 0.0, 0.0}, {T, X, Y}}; }
    Box support() const noexcept { return {{0.0, -X_phi, -Y_phi}, {T_phi, X_phi, Y_phi}}; }
    double volume() const noexcept { return T * X * Y; }
    bool in_support(const Point3& lag) const noexcept {
        return lag.t >= 0.0 && lag.t <= T_phi && std::abs(lag.x) <= X_phi && std::abs(lag.y) <= Y_phi;
    }
};

/// Events with strictly increasing time.
struct EventSequence {
    std::vector<Point3> events;

    std::size_t size() const noexcept { return events.size(); }
    bool empty() const noexcept { return events.empty(); }
};

/// Sorts by time and separates tied timestamps by 1e-9 * T. Events outside the window are rejected.
EventSequence ingest_events(std::vector<Point3> raw, const SpatioTemporalWindow& window,
                            std::vector<std::string>* warnings = nullptr);

enum class LinkKind { Softplus, Exp, Sigmoid };

struct LinkFunction {
    LinkKind kind{LinkKind::Softplus};
    double alpha{1.0};  ///< scale of the sigmoid link

    double operator()(double v) const noexcept;
    double derivative(double v) const noexcept;
};

double apply_link(const LinkFunction& link, double v);
/// The latent value mapped to `rate`, which must lie in the range of the link.
double inverse_link(const LinkFunction& link, double rate);
std::string to_string(LinkKind kind);
LinkKind parse_link(const std::string& name);

/// Default sigmoid scale: ten times the crude event density n / |W|.
double default_sigmoid_alpha(std::size_t n_events, const SpatioTemporalWindow& window);

/// Tensor grid with per-axis trapezoid weights.
struct QuadratureGrid {
    TensorGrid grid;
    std::array<std::vector<double>, 3> weights;

    static QuadratureGrid trapezoid(const Box& box, std::array<std::size_t, 3> counts);

    std::size_t size() const noexcept { return grid.size(); }
    Eigen::VectorXd flat_weights() const;
};

enum class GridProfile { Full, Desk };

std::array<std::size_t, 3> mu_grid_counts(GridProfile profile) noexcept;
std::array<std::size_t, 3> phi_grid_counts(GridProfile profile) noexcept;

struct QuadratureSet {
    QuadratureGrid mu;
    QuadratureGrid phi;
};

QuadratureSet make_quadrature(const SpatioTemporalWindow& window, GridProfile profile);
QuadratureSet make_quadrature(const SpatioTemporalWindow& window, std::array<std::size_t, 3> mu_counts,
                              std::array<std::size_t, 3> phi_counts);

/// Per-event integration box of the trigger, the support clipped to what remains of W.
struct ClipBounds {
    std::array<double, 3> lo{};
    std::array<double, 3> hi{};
};

ClipBounds compensator_trigger_clip(const Point3& event, const SpatioTemporalWindow& window);

/// Node weights c with sum_j c_j f(z_j) = integral over [a, b] of the piecewise-linear
/// interpolant of f on the nodes. Coincides with the trapezoid rule when a and b are the end nodes.
std::vector<double> clipped_axis_weights(const std::vector<double>& nodes, double a, double b);

/// A past event whose lag to a later event lies in the trigger support.
struct EventPair {
    std::size_t child{0};
    std::size_t parent{0};
    Point3 lag;
};

std::vector<EventPair> collect_pairs(const EventSequence& data, const SpatioTemporalWindow& window);

/// Everything about a data set that does not depend on the intensity.
struct PreparedData {
    SpatioTemporalWindow window;
    EventSequence data;
    QuadratureGrid mu_grid;
    QuadratureGrid phi_grid;
    std::vector<EventPair> pairs;
    std::vector<Point3> pair_lags;
    Eigen::VectorXd mu_weights;   ///< trapezoid weights over W
    Eigen::VectorXd phi_weights;  ///< summed clipped trigger weights over the support grid
    bool has_trigger{true};
};

PreparedData prepare_data(const EventSequence& data, const SpatioTemporalWindow& window,
                          const QuadratureSet& grids, bool with_trigger = true);

/// Rates at the places the likelihood needs them.
struct IntensityValues {
    Eigen::VectorXd mu_nodes;
    Eigen::VectorXd mu_events;
    Eigen::VectorXd phi_nodes;
    Eigen::VectorXd phi_pairs;
};

using LikelihoodGradient = IntensityValues;

/// sum_i log lambda_i - int mu - sum_i int_clip phi. Returns -infinity when some lambda_i <= 0.
/// When `grad` is given it receives the derivative with respect to every rate.
double log_likelihood(const PreparedData& prepared, const IntensityValues& rates,
                      LikelihoodGradient* grad = nullptr);

using RateFunction = std::function<double(const Point3&)>;

IntensityValues evaluate_rates(const PreparedData& prepared, const RateFunction& mu,
                               const RateFunction& phi);

double log_likelihood(const PreparedData& prepared, const RateFunction& mu, const RateFunction& phi);

/// Independent sequences on the same window: the log-likelihoods add up.
double multi_sequence_log_likelihood(std::span<const PreparedData> sequences, const RateFunction& mu,
                                     const RateFunction& phi);

/// mu_value + sum over past events inside the support of phi(q - event).
double intensity_at(double mu_value, const RateFunction& phi, std::span<const Point3> history,
                    const Point3& q, const SpatioTemporalWindow& window);

struct L1Norms {
    double mu{0.0};
    double phi{0.0};
};

double integrate(const QuadratureGrid& grid, const Eigen::VectorXd& node_values);
L1Norms l1_norms(const QuadratureSet& grids, const Eigen::VectorXd& mu_nodes,
                 const Eigen::VectorXd& phi_nodes);
Eigen::VectorXd evaluate_on_grid(const QuadratureGrid& grid, const RateFunction& f);

/// |mu|_1 / (1 - |phi|_1); throws std::domain_error for an explosive trigger.
double expected_total_events(double mu_norm, double phi_norm);

/// Spatial mean of a field over each time node of the grid.
std::vector<double> spatial_average(const QuadratureGrid& grid, const Eigen::VectorXd& node_values);

}  // namespace nphawkes
