#pragma once

#include "nphawkes/hawkes_model.hpp"
#include "nphawkes/kernels.hpp"
#include "nphawkes/random.hpp"
#include "nphawkes/sparse_gp.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nphawkes {

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

/// log N(x; mean, factor * factor^T).
double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& factor);

struct GammaPrior {
    double shape{2.0};
    double rate{2.0};
};

/// Independent Gamma priors on positive hyperparameters theta, evaluated at alpha = log theta
/// with the Jacobian of the exponential included.
struct HyperPrior {
    std::vector<GammaPrior> entries;

    static HyperPrior uniform(std::size_t n, GammaPrior prior = {});
    double log_density(std::span<const double> alpha, std::span<double> grad = {}) const;
};

/// q(alpha) = N(mean, factor * factor^T) over alpha = log theta.
struct HyperparamPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd factor;

    void validate() const;
};

/// A Gaussian stored inside the flat parameter vector: the mean followed by the lower triangle
/// of its factor, row by row, with the diagonal kept on the log scale.
struct GaussianSlot {
    std::size_t offset{0};
    std::size_t dim{0};

    std::size_t size() const noexcept { return dim + dim * (dim + 1) / 2; }
    void unpack(std::span<const double> params, Eigen::VectorXd& mean, Eigen::MatrixXd& factor) const;
    void pack(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor, std::span<double> params) const;
    /// Adds dF/dmean and dF/dfactor (lower triangle, chain-ruled through the log diagonal).
    void add_gradient(const Eigen::VectorXd& d_mean, const Eigen::MatrixXd& d_factor,
                      const Eigen::MatrixXd& factor, std::span<double> grad) const;
};

/// A rate surface that can be queried anywhere in its domain.
class RateField {
public:
    virtual ~RateField() = default;
    virtual Eigen::VectorXd at_points(std::span<const Point3> points) const = 0;
    virtual Eigen::VectorXd on_grid(const TensorGrid& grid) const;
    double at(const Point3& p) const { return at_points(std::span<const Point3>(&p, 1))[0]; }
};

/// Wraps a plain function.
class FunctionRateField final : public RateField {
public:
    explicit FunctionRateField(RateFunction f) : f_(std::move(f)) {}
    Eigen::VectorXd at_points(std::span<const Point3> points) const override;

private:
    RateFunction f_;
};

/// Pointwise mean of several fields.
class MeanRateField final : public RateField {
public:
    explicit MeanRateField(std::vector<std::shared_ptr<const RateField>> fields);
    Eigen::VectorXd at_points(std::span<const Point3> points) const override;
    Eigen::VectorXd on_grid(const TensorGrid& grid) const override;

private:
    std::vector<std::shared_ptr<const RateField>> fields_;
};

/// Result of pushing one noise draw through a model component.
struct ComponentDraw {
    Eigen::VectorXd node_rates;
    Eigen::VectorXd point_rates;
    /// log p(latent | hyper) + log p(hyper) - log q(latent) - log q(hyper) at the draw.
    double log_ratio{0.0};
    /// Given dF/d(rates), adds dF/d(parameters) for F = likelihood + log_ratio.
    std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&, std::span<double>)> backward;
};

/// One of the two parts of the intensity: rates on a tensor grid of nodes plus scattered points.
class Component {
public:
    virtual ~Component() = default;
    virtual std::string kind() const = 0;
    virtual std::size_t parameter_count() const = 0;
    virtual std::size_t noise_dimension() const = 0;
    virtual Eigen::VectorXd initial_parameters() const = 0;
    /// Throws ConditioningError when the draw cannot be evaluated.
    virtual ComponentDraw draw(std::span<const double> params, const Eigen::VectorXd& noise) const = 0;
    virtual std::shared_ptr<const RateField> realize(std::span<const double> params,
                                                     const Eigen::VectorXd& noise) const = 0;
    virtual nlohmann::json describe(std::span<const double> params) const = 0;
};

struct GPComponentSettings {
    KernelFamily family{KernelFamily::RBF};
    KernelStructure structure{KernelStructure::Additive};
    LinkFunction link{};
    Box domain{};
    std::array<std::size_t, 3> inducing_counts{4, 4, 4};
    GammaPrior prior{};
    double init_scale{0.1};
    /// Packed starting hyperparameters (natural scale); empty selects the default.
    std::vector<double> initial_hyperparameters{};
    /// When set, the inducing means start at the latent value whose linked rate equals this.
    std::optional<double> initial_rate{};
};

/// Sparse GP latent function pushed through a link: q(u) and q(log theta) are full Gaussians.
class GPComponent final : public Component {
public:
    GPComponent(GPComponentSettings settings, TensorGrid nodes, std::vector<Point3> points);

    std::string kind() const override { return "gp"; }
    std::size_t parameter_count() const override { return u_.size() + alpha_.size(); }
    std::size_t noise_dimension() const override { return u_.dim + alpha_.dim; }
    Eigen::VectorXd initial_parameters() const override;
    ComponentDraw draw(std::span<const double> params, const Eigen::VectorXd& noise) const override;
    std::shared_ptr<const RateField> realize(std::span<const double> params,
                                             const Eigen::VectorXd& noise) const override;
    nlohmann::json describe(std::span<const double> params) const override;

    const GPComponentSettings& settings() const noexcept { return settings_; }
    const InducingGrid& inducing_grid() const noexcept { return grid_; }
    InducingPosterior inducing_posterior(std::span<const double> params) const;
    HyperparamPosterior hyper_posterior(std::span<const double> params) const;
    /// Kernel at theta = exp(E[alpha]).
    KernelSpec kernel_at_mean(std::span<const double> params) const;
    /// Initial log-hyperparameters: log 1 for variances, log(extent / 4) for lengthscales,
    /// unless the settings carry explicit values.
    Eigen::VectorXd initial_log_hyperparameters() const;

private:
    GPComponentSettings settings_;
    InducingGrid grid_;
    TensorGrid nodes_;
    std::vector<Point3> points_;
    HyperPrior prior_;
    GaussianSlot u_;
    GaussianSlot alpha_;
};

/// Background plus optional trigger.
class VariationalModel {
public:
    VariationalModel(std::shared_ptr<const Component> background,
                     std::shared_ptr<const Component> trigger);

    std::size_t parameter_count() const noexcept { return n_bg_ + n_tr_; }
    std::size_t noise_dimension() const noexcept { return e_bg_ + e_tr_; }
    Eigen::VectorXd initial_parameters() const;

    const Component& background() const noexcept { return *background_; }
    const Component* trigger() const noexcept { return trigger_.get(); }
    std::span<const double> background_params(std::span<const double> all) const {
        return all.subspan(0, n_bg_);
    }
    std::span<const double> trigger_params(std::span<const double> all) const {
        return all.subspan(n_bg_, n_tr_);
    }

    /// One reparameterised ELBO draw. Returns -infinity when the draw fails.
    double elbo_draw(const PreparedData& data, std::span<const double> params,
                     const Eigen::VectorXd& noise, Eigen::VectorXd* grad) const;

    struct FieldDraw {
        std::shared_ptr<const RateField> mu;
        std::shared_ptr<const RateField> phi;  ///< null without a trigger
    };
    FieldDraw sample_fields(std::span<const double> params, const Eigen::VectorXd& noise) const;

    nlohmann::json describe(std::span<const double> params) const;

private:
    std::shared_ptr<const Component> background_;
    std::shared_ptr<const Component> trigger_;
    std::size_t n_bg_, n_tr_, e_bg_, e_tr_;
};

struct ElboEstimate {
    double value{0.0};
    double standard_error{0.0};
    int failed_draws{0};
    Eigen::VectorXd gradient;
};

/// Monte Carlo ELBO over n_samples draws generated from `seed`. A failed draw makes the value
/// -infinity; if every draw fails a std::runtime_error is thrown.
ElboEstimate elbo_estimate(const VariationalModel& model, const PreparedData& data,
                           std::span<const double> params, int n_samples, std::uint64_t seed,
                           bool with_gradient, std::uint64_t stream = 0);

struct OptimizerConfig {
    int iterations{800};
    double step_size{0.04};
    int mc_samples{8};
    std::uint64_t seed{0};
    double beta1{0.9};
    double beta2{0.999};
    double epsilon{1e-8};
    bool cosine_decay{false};
    /// Draws used for the final ELBO that ranks restarts.
    int final_samples{64};
};

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FitResult {
    Eigen::VectorXd parameters;
    std::vector<double> elbo_trace;
    double final_elbo{0.0};
    std::uint64_t seed{0};
    int skipped_steps{0};
    double wall_time_seconds{0.0};
};

using ProgressCallback = std::function<void(int iteration, double elbo)>;

/// Adam ascent on the ELBO.
FitResult fit(const VariationalModel& model, const PreparedData& data, const Eigen::VectorXd& init,
              const OptimizerConfig& config, const ProgressCallback& progress = {});

struct RestartOutcome {
    FitResult best;
    std::size_t best_index{0};
    std::vector<FitResult> runs;
    std::vector<std::string> errors;
};

/// Runs one fit per seed and keeps the highest final ELBO.
RestartOutcome multi_restart(const VariationalModel& model, const PreparedData& data,
                             const Eigen::VectorXd& init, const OptimizerConfig& config,
                             const std::vector<std::uint64_t>& seeds);

/// Index of the largest value; the first one on ties.
std::size_t argmax_elbo(const std::vector<double>& final_elbos);

}  // namespace nphawkes
