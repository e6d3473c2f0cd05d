#include "nphawkes/baselines.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nphawkes {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double gamma_log_prior(const GammaPrior& g, double alpha, double* grad) {
    const double e = std::exp(alpha);
    if (grad != nullptr) *grad = g.shape - g.rate * e;
    return g.shape * std::log(g.rate) - std::lgamma(g.shape) + g.shape * alpha - g.rate * e;
}

class ConstantField final : public RateField {
public:
    explicit ConstantField(double c) : c_(c) {}
    Eigen::VectorXd at_points(std::span<const Point3> points) const override {
        return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(points.size()), c_);
    }

private:
    double c_;
};

// d log phi / d log(alpha, beta, sigma_x, sigma_y)
std::array<double, 4> trigger_log_gradient(const ParametricTrigger& p, const Point3& lag) {
    return {1.0, 1.0 - p.beta * lag.t, -1.0 + lag.x * lag.x / (p.sigma_x * p.sigma_x),
            -1.0 + lag.y * lag.y / (p.sigma_y * p.sigma_y)};
}

ParametricTrigger from_log(const Eigen::VectorXd& a) {
    return {std::exp(a[0]), std::exp(a[1]), std::exp(a[2]), std::exp(a[3])};
}

}  // namespace

void ParametricTrigger::validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0) || !(sigma_x > 0.0) || !(sigma_y > 0.0)) {
        throw std::domain_error("parametric trigger parameters must be positive");
    }
}

double parametric_trigger_eval(const ParametricTrigger& p, const Point3& lag,
                               const SpatioTemporalWindow* window) {
    if (lag.t < 0.0) return 0.0;
    if (window != nullptr && !window->in_support(lag)) return 0.0;
    return p.alpha * p.beta / (2.0 * std::numbers::pi * p.sigma_x * p.sigma_y) *
           std::exp(-p.beta * lag.t) *
           std::exp(-lag.x * lag.x / (2.0 * p.sigma_x * p.sigma_x) -
                    lag.y * lag.y / (2.0 * p.sigma_y * p.sigma_y));
}

ConstantComponent::ConstantComponent(double initial_rate, GammaPrior prior, std::size_t n_nodes,
                                     std::size_t n_points, double init_scale)
    : initial_rate_(initial_rate), prior_(prior), n_nodes_(n_nodes), n_points_(n_points),
      init_scale_(init_scale) {
    if (!(initial_rate > 0.0)) throw std::invalid_argument("initial constant rate must be positive");
}

Eigen::VectorXd ConstantComponent::initial_parameters() const {
    Eigen::VectorXd p(2);
    p << std::log(initial_rate_), std::log(init_scale_);
    return p;
}

ComponentDraw ConstantComponent::draw(std::span<const double> params, const Eigen::VectorXd& noise) const {
    const double m = params[0], s = std::exp(params[1]), eps = noise[0];
    const double alpha = m + s * eps;
    const double c = std::exp(alpha);
    ComponentDraw out;
    out.node_rates = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_nodes_), c);
    out.point_rates = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_points_), c);
    double dprior = 0.0;
    out.log_ratio = gamma_log_prior(prior_, alpha, &dprior) + 0.5 * kLog2Pi + std::log(s) + 0.5 * eps * eps;
    out.backward = [c, s, eps, dprior](const Eigen::VectorXd& dn, const Eigen::VectorXd& dp,
                                       std::span<double> grad) {
        const double d_alpha = c * (dn.sum() + dp.sum()) + dprior;
        grad[0] += d_alpha;
        grad[1] += d_alpha * eps * s + 1.0;
    };
    return out;
}

std::shared_ptr<const RateField> ConstantComponent::realize(std::span<const double> params,
                                                            const Eigen::VectorXd& noise) const {
    return std::make_shared<ConstantField>(std::exp(params[0] + std::exp(params[1]) * noise[0]));
}

nlohmann::json ConstantComponent::describe(std::span<const double> params) const {
    nlohmann::json j;
    j["kind"] = "constant";
    j["log_mean"] = params[0];
    j["log_sd"] = std::exp(params[1]);
    j["rate_at_mean"] = std::exp(params[0]);
    return j;
}

ParametricTriggerComponent::ParametricTriggerComponent(ParametricTrigger initial, GammaPrior prior,
                                                       SpatioTemporalWindow window, TensorGrid nodes,
                                                       std::vector<Point3> points, double init_scale)
    : initial_(initial), prior_(prior), window_(window), nodes_(std::move(nodes)),
      points_(std::move(points)), init_scale_(init_scale) {
    initial_.validate();
}

Eigen::VectorXd ParametricTriggerComponent::initial_parameters() const {
    Eigen::VectorXd p(8);
    p << std::log(initial_.alpha), std::log(initial_.beta), std::log(initial_.sigma_x),
        std::log(initial_.sigma_y), Eigen::VectorXd::Constant(4, std::log(init_scale_));
    return p;
}

ComponentDraw ParametricTriggerComponent::draw(std::span<const double> params,
                                               const Eigen::VectorXd& noise) const {
    Eigen::VectorXd m(4), s(4), alpha(4);
    for (int i = 0; i < 4; ++i) {
        m[i] = params[static_cast<std::size_t>(i)];
        s[i] = std::exp(params[static_cast<std::size_t>(i) + 4]);
        alpha[i] = m[i] + s[i] * noise[i];
        if (!std::isfinite(alpha[i]) || std::abs(alpha[i]) > 30.0) {
            throw ConditioningError("trigger parameter draw out of range",
                                    std::numeric_limits<double>::infinity());
        }
    }
    const ParametricTrigger p = from_log(alpha);
    ComponentDraw out;
    const std::vector<Point3> node_pts = nodes_.points();
    out.node_rates.resize(static_cast<Eigen::Index>(node_pts.size()));
    for (std::size_t i = 0; i < node_pts.size(); ++i) {
        out.node_rates[static_cast<Eigen::Index>(i)] = parametric_trigger_eval(p, node_pts[i], &window_);
    }
    out.point_rates.resize(static_cast<Eigen::Index>(points_.size()));
    for (std::size_t i = 0; i < points_.size(); ++i) {
        out.point_rates[static_cast<Eigen::Index>(i)] = parametric_trigger_eval(p, points_[i], &window_);
    }
    std::array<double, 4> dprior{};
    double lr = 0.0;
    for (int i = 0; i < 4; ++i) {
        lr += gamma_log_prior(prior_, alpha[i], &dprior[static_cast<std::size_t>(i)]) + 0.5 * kLog2Pi +
              std::log(s[i]) + 0.5 * noise[i] * noise[i];
    }
    out.log_ratio = lr;
    Eigen::VectorXd eps = noise.head(4);
    auto node_rates = out.node_rates;
    auto point_rates = out.point_rates;
    out.backward = [this, p, s, eps, dprior, node_pts, node_rates, point_rates](
                       const Eigen::VectorXd& dn, const Eigen::VectorXd& dp, std::span<double> grad) {
        std::array<double, 4> d = dprior;
        auto accumulate = [&](const std::vector<Point3>& pts, const Eigen::VectorXd& rates,
                              const Eigen::VectorXd& dr) {
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const double c = dr[static_cast<Eigen::Index>(i)] * rates[static_cast<Eigen::Index>(i)];
                if (c == 0.0) continue;
                const auto g = trigger_log_gradient(p, pts[i]);
                for (std::size_t k = 0; k < 4; ++k) d[k] += c * g[k];
            }
        };
        accumulate(node_pts, node_rates, dn);
        accumulate(points_, point_rates, dp);
        for (std::size_t k = 0; k < 4; ++k) {
            grad[k] += d[k];
            grad[k + 4] += d[k] * eps[static_cast<Eigen::Index>(k)] * s[static_cast<Eigen::Index>(k)] + 1.0;
        }
    };
    return out;
}

std::shared_ptr<const RateField> ParametricTriggerComponent::realize(std::span<const double> params,
                                                                     const Eigen::VectorXd& noise) const {
    Eigen::VectorXd a(4);
    for (int i = 0; i < 4; ++i) {
        a[i] = params[static_cast<std::size_t>(i)] + std::exp(params[static_cast<std::size_t>(i) + 4]) * noise[i];
    }
    const ParametricTrigger p = from_log(a);
    const SpatioTemporalWindow w = window_;
    return std::make_shared<FunctionRateField>(
        [p, w](const Point3& lag) { return parametric_trigger_eval(p, lag, &w); });
}

nlohmann::json ParametricTriggerComponent::describe(std::span<const double> params) const {
    nlohmann::json j;
    j["kind"] = "parametric_trigger";
    j["names"] = {"alpha", "beta", "sigma_x", "sigma_y"};
    j["log_mean"] = std::vector<double>(params.begin(), params.begin() + 4);
    std::vector<double> sd, at_mean;
    for (std::size_t i = 0; i < 4; ++i) {
        sd.push_back(std::exp(params[i + 4]));
        at_mean.push_back(std::exp(params[i]));
    }
    j["log_sd"] = sd;
    j["at_mean"] = at_mean;
    return j;
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Nonparametric: return "ours";
        case ModelKind::ParametricHawkes: return "parametric_hawkes";
        case ModelKind::CoxHawkes: return "cox_hawkes";
        case ModelKind::LGCP: return "lgcp";
    }
    return "?";
}

ModelKind parse_model_kind(const std::string& name) {
    if (name == "ours" || name == "nonparametric") return ModelKind::Nonparametric;
    if (name == "parametric_hawkes") return ModelKind::ParametricHawkes;
    if (name == "cox_hawkes") return ModelKind::CoxHawkes;
    if (name == "lgcp") return ModelKind::LGCP;
    throw std::invalid_argument("unknown model kind '" + name + "'");
}

bool has_trigger(ModelKind kind) noexcept { return kind != ModelKind::LGCP; }

std::shared_ptr<VariationalModel> build_model(const ModelSpec& spec, const PreparedData& data) {
    if (data.has_trigger != has_trigger(spec.kind)) {
        throw std::invalid_argument("data preparation does not match the model's trigger");
    }
    const SpatioTemporalWindow& w = data.window;
    std::shared_ptr<const Component> bg, tr;
    const ParametricTrigger trig_init{0.3, 1.0, w.X_phi / 3.0, w.Y_phi / 3.0};
    const double density = static_cast<double>(data.data.size()) / w.volume();
    auto start_rate = [&](GPComponentSettings& s) {
        if (!spec.data_init || s.initial_rate || !(density > 0.0)) return;
        if (s.link.kind == LinkKind::Sigmoid && !(density < s.link.alpha)) return;
        s.initial_rate = density;
    };
    switch (spec.kind) {
        case ModelKind::Nonparametric: {
            GPComponentSettings mu = spec.mu, phi = spec.phi;
            mu.domain = w.domain();
            phi.domain = w.support();
            start_rate(mu);
            bg = std::make_shared<GPComponent>(mu, data.mu_grid.grid, data.data.events);
            tr = std::make_shared<GPComponent>(phi, data.phi_grid.grid, data.pair_lags);
            break;
        }
        case ModelKind::ParametricHawkes: {
            const double rate = std::max(static_cast<double>(data.data.size()), 1.0) / w.volume();
            bg = std::make_shared<ConstantComponent>(rate, spec.constant_prior, data.mu_grid.size(),
                                                     data.data.size(), spec.mu.init_scale);
            tr = std::make_shared<ParametricTriggerComponent>(trig_init, spec.trigger_prior, w,
                                                              data.phi_grid.grid, data.pair_lags,
                                                              spec.phi.init_scale);
            break;
        }
        case ModelKind::CoxHawkes:
        case ModelKind::LGCP: {
            GPComponentSettings mu = spec.mu;
            mu.structure = KernelStructure::Additive;
            mu.link = spec.baseline_link;
            mu.domain = w.domain();
            start_rate(mu);
            bg = std::make_shared<GPComponent>(mu, data.mu_grid.grid, data.data.events);
            if (spec.kind == ModelKind::CoxHawkes) {
                tr = std::make_shared<ParametricTriggerComponent>(trig_init, spec.trigger_prior, w,
                                                                  data.phi_grid.grid, data.pair_lags,
                                                                  spec.phi.init_scale);
            }
            break;
        }
    }
    return std::make_shared<VariationalModel>(bg, tr);
}

FitResult fit_baseline(const ModelSpec& spec, const PreparedData& data, const OptimizerConfig& config) {
    if (spec.kind == ModelKind::Nonparametric) {
        throw std::invalid_argument("fit_baseline expects one of the comparison models");
    }
    const auto model = build_model(spec, data);
    return fit(*model, data, model->initial_parameters(), config);
}

}  // namespace nphawkes
