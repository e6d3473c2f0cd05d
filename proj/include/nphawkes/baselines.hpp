#pragma once

#include "nphawkes/hawkes_model.hpp"
#include "nphawkes/vi.hpp"

#include <memory>
#include <string>

namespace nphawkes {

/// alpha * beta / (2 pi sx sy) * exp(-beta dt) * exp(-dx^2 / (2 sx^2) - dy^2 / (2 sy^2))
struct ParametricTrigger {
    double alpha{0.3};
    double beta{1.0};
    double sigma_x{0.1};
    double sigma_y{0.1};

    void validate() const;
};

/// Trigger value at a lag. With a window the kernel is truncated to its support.
double parametric_trigger_eval(const ParametricTrigger& p, const Point3& lag,
                               const SpatioTemporalWindow* window = nullptr);

/// Constant rate with a log-normal variational factor.
class ConstantComponent final : public Component {
public:
    ConstantComponent(double initial_rate, GammaPrior prior, std::size_t n_nodes, std::size_t n_points,
                      double init_scale = 0.1);

    std::string kind() const override { return "constant"; }
    std::size_t parameter_count() const override { return 2; }
    std::size_t noise_dimension() const override { return 1; }
    Eigen::VectorXd initial_parameters() const override;
    ComponentDraw draw(std::span<const double> params, const Eigen::VectorXd& noise) const override;
    std::shared_ptr<const RateField> realize(std::span<const double> params,
                                             const Eigen::VectorXd& noise) const override;
    nlohmann::json describe(std::span<const double> params) const override;

private:
    double initial_rate_;
    GammaPrior prior_;
    std::size_t n_nodes_, n_points_;
    double init_scale_;
};

/// Parametric trigger with independent log-normal factors on (alpha, beta, sigma_x, sigma_y).
class ParametricTriggerComponent final : public Component {
public:
    ParametricTriggerComponent(ParametricTrigger initial, GammaPrior prior, SpatioTemporalWindow window,
                               TensorGrid nodes, std::vector<Point3> points, double init_scale = 0.1);

    std::string kind() const override { return "parametric_trigger"; }
    std::size_t parameter_count() const override { return 8; }
    std::size_t noise_dimension() const override { return 4; }
    Eigen::VectorXd initial_parameters() const override;
    ComponentDraw draw(std::span<const double> params, const Eigen::VectorXd& noise) const override;
    std::shared_ptr<const RateField> realize(std::span<const double> params,
                                             const Eigen::VectorXd& noise) const override;
    nlohmann::json describe(std::span<const double> params) const override;

private:
    ParametricTrigger initial_;
    GammaPrior prior_;
    SpatioTemporalWindow window_;
    TensorGrid nodes_;
    std::vector<Point3> points_;
    double init_scale_;
};

enum class ModelKind { Nonparametric, ParametricHawkes, CoxHawkes, LGCP };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);
bool has_trigger(ModelKind kind) noexcept;

struct ModelSpec {
    ModelKind kind{ModelKind::Nonparametric};
    /// Latent background settings; the domain is taken from the data window.
    GPComponentSettings mu{KernelFamily::RBF, KernelStructure::Additive, {}, {}, {4, 4, 4}, {}, 0.1};
    /// Latent trigger settings; the domain is taken from the trigger support.
    GPComponentSettings phi{KernelFamily::RBF, KernelStructure::Additive, {}, {}, {3, 3, 3}, {}, 0.1};
    /// Background link of the Cox-Hawkes and LGCP baselines.
    LinkFunction baseline_link{LinkKind::Exp, 1.0};
    GammaPrior constant_prior{1.0, 0.01};
    GammaPrior trigger_prior{2.0, 2.0};
    /// Start a latent background at the crude event density n / |W| instead of at zero.
    bool data_init{true};
};

/// Builds the variational model for a data set. The data must have been prepared with a
/// trigger exactly when the model kind has one.
std::shared_ptr<VariationalModel> build_model(const ModelSpec& spec, const PreparedData& data);

/// Builds and fits one of the three comparison models with the shared optimiser.
FitResult fit_baseline(const ModelSpec& spec, const PreparedData& data, const OptimizerConfig& config);

}  // namespace nphawkes
