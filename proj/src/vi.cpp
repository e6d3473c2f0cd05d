#include "nphawkes/vi.hpp"

#include "nphawkes/json_util.hpp"

#include <Eigen/Cholesky>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace nphawkes {

namespace {

using Index = Eigen::Index;

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Log-hyperparameter draws beyond this magnitude are treated as failed draws.
constexpr double kAlphaLimit = 30.0;

double neg_log_q(const Eigen::MatrixXd& factor, const Eigen::VectorXd& eps) {
    return 0.5 * static_cast<double>(eps.size()) * kLog2Pi +
           factor.diagonal().array().log().sum() + 0.5 * eps.squaredNorm();
}

class GPField final : public RateField {
public:
    GPField(std::shared_ptr<const CrossCovariance> cc, Eigen::VectorXd w, LinkFunction link)
        : cc_(std::move(cc)), w_(std::move(w)), link_(link) {}

    Eigen::VectorXd at_points(std::span<const Point3> points) const override {
        Eigen::VectorXd out(static_cast<Index>(points.size()));
        constexpr std::size_t chunk = 4096;
        for (std::size_t s = 0; s < points.size(); s += chunk) {
            const std::size_t n = std::min(chunk, points.size() - s);
            const ScatteredBasis basis = cc_->scattered_basis(points.subspan(s, n), false);
            out.segment(static_cast<Index>(s), static_cast<Index>(n)) =
                cc_->apply_scattered(basis, w_).unaryExpr([this](double v) { return link_(v); });
        }
        return out;
    }

    Eigen::VectorXd on_grid(const TensorGrid& grid) const override {
        return cc_->apply_grid(grid, w_).unaryExpr([this](double v) { return link_(v); });
    }

private:
    std::shared_ptr<const CrossCovariance> cc_;
    Eigen::VectorXd w_;
    LinkFunction link_;
};

}  // namespace

double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& factor) {
    const Index d = x.size();
    if (mean.size() != d || factor.rows() != d || factor.cols() != d) {
        throw std::invalid_argument("gaussian_log_density: dimension mismatch");
    }
    if (!x.allFinite() || !mean.allFinite() || !factor.allFinite()) {
        throw std::invalid_argument("gaussian_log_density: non-finite input");
    }
    for (Index i = 0; i < d; ++i) {
        if (!(factor(i, i) > 0.0)) {
            throw std::invalid_argument("gaussian_log_density: factor needs a positive diagonal");
        }
    }
    const Eigen::VectorXd z =
        factor.triangularView<Eigen::Lower>().solve(Eigen::VectorXd(x - mean));
    return -0.5 * static_cast<double>(d) * kLog2Pi - factor.diagonal().array().log().sum() -
           0.5 * z.squaredNorm();
}

HyperPrior HyperPrior::uniform(std::size_t n, GammaPrior prior) {
    if (!(prior.shape > 0.0) || !(prior.rate > 0.0)) {
        throw std::invalid_argument("Gamma prior needs positive shape and rate");
    }
    return HyperPrior{std::vector<GammaPrior>(n, prior)};
}

double HyperPrior::log_density(std::span<const double> alpha, std::span<double> grad) const {
    if (alpha.size() != entries.size()) throw std::invalid_argument("hyperprior: dimension mismatch");
    double lp = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double a = entries[i].shape, b = entries[i].rate;
        const double e = std::exp(alpha[i]);
        lp += a * std::log(b) - std::lgamma(a) + a * alpha[i] - b * e;
        if (!grad.empty()) grad[i] += a - b * e;
    }
    return lp;
}

void HyperparamPosterior::validate() const {
    InducingPosterior{mean, factor}.validate();
}

void GaussianSlot::unpack(std::span<const double> params, Eigen::VectorXd& mean,
                          Eigen::MatrixXd& factor) const {
    const auto d = static_cast<Index>(dim);
    mean.resize(d);
    factor = Eigen::MatrixXd::Zero(d, d);
    std::size_t k = offset;
    for (Index i = 0; i < d; ++i) mean[i] = params[k++];
    for (Index i = 0; i < d; ++i) {
        for (Index j = 0; j <= i; ++j) {
            factor(i, j) = i == j ? std::exp(params[k]) : params[k];
            ++k;
        }
    }
}

void GaussianSlot::pack(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor,
                        std::span<double> params) const {
    const auto d = static_cast<Index>(dim);
    if (mean.size() != d || factor.rows() != d || factor.cols() != d) {
        throw std::invalid_argument("GaussianSlot::pack: dimension mismatch");
    }
    std::size_t k = offset;
    for (Index i = 0; i < d; ++i) params[k++] = mean[i];
    for (Index i = 0; i < d; ++i) {
        for (Index j = 0; j <= i; ++j) {
            if (i == j && !(factor(i, i) > 0.0)) {
                throw std::invalid_argument("GaussianSlot::pack: factor needs a positive diagonal");
            }
            params[k++] = i == j ? std::log(factor(i, i)) : factor(i, j);
        }
    }
}

void GaussianSlot::add_gradient(const Eigen::VectorXd& d_mean, const Eigen::MatrixXd& d_factor,
                                const Eigen::MatrixXd& factor, std::span<double> grad) const {
    const auto d = static_cast<Index>(dim);
    std::size_t k = offset;
    for (Index i = 0; i < d; ++i) grad[k++] += d_mean[i];
    for (Index i = 0; i < d; ++i) {
        for (Index j = 0; j <= i; ++j) {
            grad[k++] += i == j ? d_factor(i, i) * factor(i, i) : d_factor(i, j);
        }
    }
}

Eigen::VectorXd RateField::on_grid(const TensorGrid& grid) const {
    const std::vector<Point3> pts = grid.points();
    return at_points(pts);
}

Eigen::VectorXd FunctionRateField::at_points(std::span<const Point3> points) const {
    Eigen::VectorXd out(static_cast<Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) out[static_cast<Index>(i)] = f_(points[i]);
    return out;
}

MeanRateField::MeanRateField(std::vector<std::shared_ptr<const RateField>> fields)
    : fields_(std::move(fields)) {
    if (fields_.empty()) throw std::invalid_argument("MeanRateField needs at least one field");
}

Eigen::VectorXd MeanRateField::at_points(std::span<const Point3> points) const {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Index>(points.size()));
    for (const auto& f : fields_) acc += f->at_points(points);
    return acc / static_cast<double>(fields_.size());
}

Eigen::VectorXd MeanRateField::on_grid(const TensorGrid& grid) const {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Index>(grid.size()));
    for (const auto& f : fields_) acc += f->on_grid(grid);
    return acc / static_cast<double>(fields_.size());
}

GPComponent::GPComponent(GPComponentSettings settings, TensorGrid nodes, std::vector<Point3> points)
    : settings_(settings),
      grid_(settings.domain, settings.inducing_counts),
      nodes_(std::move(nodes)),
      points_(std::move(points)) {
    const std::size_t p = KernelSpec::parameter_count(settings_.structure);
    prior_ = HyperPrior::uniform(p, settings_.prior);
    u_ = GaussianSlot{0, grid_.size()};
    alpha_ = GaussianSlot{u_.size(), p};
    if (!(settings_.init_scale > 0.0)) throw std::invalid_argument("init_scale must be positive");
}

Eigen::VectorXd GPComponent::initial_log_hyperparameters() const {
    if (!settings_.initial_hyperparameters.empty()) {
        const auto& h = settings_.initial_hyperparameters;
        if (h.size() != alpha_.dim) throw std::invalid_argument("wrong number of initial hyperparameters");
        Eigen::VectorXd a(static_cast<Index>(h.size()));
        for (std::size_t i = 0; i < h.size(); ++i) {
            if (!(h[i] > 0.0)) throw std::invalid_argument("initial hyperparameters must be positive");
            a[static_cast<Index>(i)] = std::log(h[i]);
        }
        return a;
    }
    const Box& b = settings_.domain;
    const double et = b.extent(0), ex = b.extent(1), ey = b.extent(2);
    if (settings_.structure == KernelStructure::Separable) {
        Eigen::VectorXd a(4);
        a << 0.0, std::log(et / 4.0), std::log(ex / 4.0), std::log(ey / 4.0);
        return a;
    }
    Eigen::VectorXd a(6);
    a << 0.0, 0.0, 0.0, std::log(et / 4.0), std::log(0.5 * (ex + ey) / 4.0),
        std::log((et + ex + ey) / 3.0 / 4.0);
    return a;
}

Eigen::VectorXd GPComponent::initial_parameters() const {
    Eigen::VectorXd params(static_cast<Index>(parameter_count()));
    const auto m = static_cast<Index>(u_.dim), p = static_cast<Index>(alpha_.dim);
    std::span<double> s(params.data(), parameter_count());
    double start = 0.0;
    if (settings_.initial_rate) start = inverse_link(settings_.link, *settings_.initial_rate);
    u_.pack(Eigen::VectorXd::Constant(m, start), settings_.init_scale * Eigen::MatrixXd::Identity(m, m), s);
    alpha_.pack(initial_log_hyperparameters(), settings_.init_scale * Eigen::MatrixXd::Identity(p, p), s);
    return params;
}

InducingPosterior GPComponent::inducing_posterior(std::span<const double> params) const {
    InducingPosterior q;
    u_.unpack(params, q.mean, q.factor);
    return q;
}

HyperparamPosterior GPComponent::hyper_posterior(std::span<const double> params) const {
    HyperparamPosterior q;
    alpha_.unpack(params, q.mean, q.factor);
    return q;
}

KernelSpec GPComponent::kernel_at_mean(std::span<const double> params) const {
    const HyperparamPosterior q = hyper_posterior(params);
    return KernelSpec::from_log_packed(settings_.family, settings_.structure,
                                       std::span<const double>(q.mean.data(), alpha_.dim));
}

namespace {

struct GPDrawState {
    Eigen::VectorXd eps_u, eps_a, alpha, w;
    Eigen::VectorXd f_nodes, f_points;
    Eigen::MatrixXd factor_u, factor_a;
    ScatteredBasis basis;
    InducingFactor gram;
    std::shared_ptr<const CrossCovariance> cc;
    KernelSpec spec;
};

}  // namespace

ComponentDraw GPComponent::draw(std::span<const double> params, const Eigen::VectorXd& noise) const {
    if (params.size() != parameter_count() || static_cast<std::size_t>(noise.size()) != noise_dimension()) {
        throw std::invalid_argument("GPComponent::draw: dimension mismatch");
    }
    const auto m = static_cast<Index>(u_.dim), p = static_cast<Index>(alpha_.dim);
    Eigen::VectorXd mean_u, mean_a;
    Eigen::MatrixXd factor_u, factor_a;
    u_.unpack(params, mean_u, factor_u);
    alpha_.unpack(params, mean_a, factor_a);
    const Eigen::VectorXd eps_u = noise.head(m);
    const Eigen::VectorXd eps_a = noise.segment(m, p);
    const Eigen::VectorXd alpha = mean_a + factor_a * eps_a;
    for (Index i = 0; i < p; ++i) {
        if (!std::isfinite(alpha[i]) || std::abs(alpha[i]) > kAlphaLimit) {
            throw ConditioningError("log-hyperparameter draw out of range",
                                    std::numeric_limits<double>::infinity());
        }
    }
    auto st = std::make_shared<GPDrawState>(GPDrawState{
        eps_u, eps_a, alpha, {}, {}, {}, factor_u, factor_a, {}, {}, nullptr,
        KernelSpec::from_log_packed(settings_.family, settings_.structure,
                                    std::span<const double>(alpha.data(), alpha_.dim))});
    st->cc = std::make_shared<CrossCovariance>(st->spec, grid_);
    st->gram = factorize_gram(st->cc->rows(grid_.points()));
    const Eigen::VectorXd u = mean_u + factor_u * eps_u;
    st->w = st->gram.solve(u);
    st->f_nodes = st->cc->apply_grid(nodes_, st->w);
    st->basis = st->cc->scattered_basis(points_, true);
    st->f_points = st->cc->apply_scattered(st->basis, st->w);

    const LinkFunction link = settings_.link;
    ComponentDraw out;
    out.node_rates = st->f_nodes.unaryExpr([&](double v) { return link(v); });
    out.point_rates = st->f_points.unaryExpr([&](double v) { return link(v); });

    const Eigen::MatrixXd l = st->gram.llt.matrixL();
    const double log_det_k = 2.0 * l.diagonal().array().log().sum();
    const double log_p_u = -0.5 * u.dot(st->w) - 0.5 * log_det_k - 0.5 * static_cast<double>(m) * kLog2Pi;
    const double log_p_a = prior_.log_density(std::span<const double>(alpha.data(), alpha_.dim));
    out.log_ratio = log_p_u + log_p_a + neg_log_q(factor_u, eps_u) + neg_log_q(factor_a, eps_a);

    out.backward = [this, st](const Eigen::VectorXd& d_nodes, const Eigen::VectorXd& d_points,
                              std::span<double> grad) {
        const LinkFunction lk = settings_.link;
        Eigen::VectorXd g_nodes(d_nodes.size()), g_points(d_points.size());
        for (Index i = 0; i < d_nodes.size(); ++i) g_nodes[i] = d_nodes[i] * lk.derivative(st->f_nodes[i]);
        for (Index i = 0; i < d_points.size(); ++i) {
            g_points[i] = d_points[i] * lk.derivative(st->f_points[i]);
        }
        const Eigen::VectorXd kt_g =
            st->cc->apply_grid_transpose(nodes_, g_nodes) + st->cc->apply_scattered_transpose(st->basis, g_points);
        const Eigen::VectorXd v = st->gram.solve(kt_g);
        const Eigen::VectorXd& w = st->w;
        const Eigen::VectorXd d_u = v - w;

        const auto mm = static_cast<Index>(u_.dim), pp = static_cast<Index>(alpha_.dim);
        Eigen::MatrixXd d_factor_u = (d_u * st->eps_u.transpose()).triangularView<Eigen::Lower>();
        d_factor_u.diagonal() += st->factor_u.diagonal().cwiseInverse();
        u_.add_gradient(d_u, d_factor_u, st->factor_u, grad);

        std::vector<double> d_alpha(alpha_.dim, 0.0);
        st->cc->accumulate_grid_gradient(nodes_, g_nodes, w, d_alpha);
        st->cc->accumulate_scattered_gradient(st->basis, g_points, w, d_alpha);
        const Eigen::MatrixXd k_inv = st->gram.llt.solve(Eigen::MatrixXd::Identity(mm, mm));
        const Eigen::MatrixXd b =
            -0.5 * (v * w.transpose() + w * v.transpose()) + 0.5 * w * w.transpose() - 0.5 * k_inv;
        st->cc->accumulate_scattered_gradient(grid_.points(), b, d_alpha);
        if (st->gram.relative_jitter > 0.0) {
            // The jitter scales with the mean diagonal, which is the sum of the variances.
            const auto& vars = st->spec.hyperparams().variances;
            const double tr = b.trace();
            for (std::size_t i = 0; i < vars.size(); ++i) {
                d_alpha[i] += st->gram.relative_jitter * vars[i] * tr;
            }
        }
        prior_.log_density(std::span<const double>(st->alpha.data(), alpha_.dim), d_alpha);

        const Eigen::Map<const Eigen::VectorXd> da(d_alpha.data(), pp);
        Eigen::MatrixXd d_factor_a = (da * st->eps_a.transpose()).triangularView<Eigen::Lower>();
        d_factor_a.diagonal() += st->factor_a.diagonal().cwiseInverse();
        alpha_.add_gradient(da, d_factor_a, st->factor_a, grad);
    };
    return out;
}

std::shared_ptr<const RateField> GPComponent::realize(std::span<const double> params,
                                                      const Eigen::VectorXd& noise) const {
    const auto m = static_cast<Index>(u_.dim), p = static_cast<Index>(alpha_.dim);
    Eigen::VectorXd mean_u, mean_a;
    Eigen::MatrixXd factor_u, factor_a;
    u_.unpack(params, mean_u, factor_u);
    alpha_.unpack(params, mean_a, factor_a);
    Eigen::VectorXd alpha = mean_a + factor_a * noise.segment(m, p);
    alpha = alpha.cwiseMax(-kAlphaLimit).cwiseMin(kAlphaLimit);
    const KernelSpec spec = KernelSpec::from_log_packed(
        settings_.family, settings_.structure, std::span<const double>(alpha.data(), alpha_.dim));
    auto cc = std::make_shared<CrossCovariance>(spec, grid_);
    const InducingFactor f = factorize_gram(cc->rows(grid_.points()));
    Eigen::VectorXd w = f.solve(mean_u + factor_u * noise.head(m));
    return std::make_shared<GPField>(std::move(cc), std::move(w), settings_.link);
}

nlohmann::json GPComponent::describe(std::span<const double> params) const {
    const InducingPosterior qu = inducing_posterior(params);
    const HyperparamPosterior qa = hyper_posterior(params);
    const KernelSpec at_mean = kernel_at_mean(params);
    nlohmann::json j;
    j["kind"] = "gp";
    j["family"] = to_string(settings_.family);
    j["structure"] = to_string(settings_.structure);
    j["link"] = to_string(settings_.link.kind);
    j["link_alpha"] = settings_.link.alpha;
    j["inducing_counts"] = settings_.inducing_counts;
    j["inducing_mean"] = vector_json(qu.mean);
    j["inducing_factor"] = matrix_json(qu.factor);
    j["hyper_names"] = at_mean.parameter_names();
    j["hyper_log_mean"] = vector_json(qa.mean);
    j["hyper_log_factor"] = matrix_json(qa.factor);
    j["hyper_at_mean"] = at_mean.packed();
    return j;
}

VariationalModel::VariationalModel(std::shared_ptr<const Component> background,
                                   std::shared_ptr<const Component> trigger)
    : background_(std::move(background)), trigger_(std::move(trigger)) {
    if (!background_) throw std::invalid_argument("a model needs a background component");
    n_bg_ = background_->parameter_count();
    e_bg_ = background_->noise_dimension();
    n_tr_ = trigger_ ? trigger_->parameter_count() : 0;
    e_tr_ = trigger_ ? trigger_->noise_dimension() : 0;
}

Eigen::VectorXd VariationalModel::initial_parameters() const {
    Eigen::VectorXd p(static_cast<Index>(parameter_count()));
    p.head(static_cast<Index>(n_bg_)) = background_->initial_parameters();
    if (trigger_) p.tail(static_cast<Index>(n_tr_)) = trigger_->initial_parameters();
    return p;
}

double VariationalModel::elbo_draw(const PreparedData& data, std::span<const double> params,
                                   const Eigen::VectorXd& noise, Eigen::VectorXd* grad) const {
    if (params.size() != parameter_count() || static_cast<std::size_t>(noise.size()) != noise_dimension()) {
        throw std::invalid_argument("elbo_draw: dimension mismatch");
    }
    ComponentDraw bg, tr;
    try {
        bg = background_->draw(background_params(params), noise.head(static_cast<Index>(e_bg_)));
        if (trigger_) {
            tr = trigger_->draw(trigger_params(params), noise.tail(static_cast<Index>(e_tr_)));
        }
    } catch (const ConditioningError&) {
        return kNegInf;
    }
    IntensityValues rates{bg.node_rates, bg.point_rates, {}, {}};
    if (trigger_) {
        rates.phi_nodes = tr.node_rates;
        rates.phi_pairs = tr.point_rates;
    } else if (data.has_trigger) {
        rates.phi_nodes = Eigen::VectorXd::Zero(data.phi_weights.size());
        rates.phi_pairs = Eigen::VectorXd::Zero(static_cast<Index>(data.pairs.size()));
    }
    LikelihoodGradient lg;
    const double ll = log_likelihood(data, rates, grad != nullptr ? &lg : nullptr);
    const double value = ll + bg.log_ratio + tr.log_ratio;
    if (!std::isfinite(value)) return kNegInf;
    if (grad != nullptr) {
        grad->setZero(static_cast<Index>(parameter_count()));
        std::span<double> all(grad->data(), parameter_count());
        bg.backward(lg.mu_nodes, lg.mu_events, all.subspan(0, n_bg_));
        if (trigger_) tr.backward(lg.phi_nodes, lg.phi_pairs, all.subspan(n_bg_, n_tr_));
    }
    return value;
}

VariationalModel::FieldDraw VariationalModel::sample_fields(std::span<const double> params,
                                                            const Eigen::VectorXd& noise) const {
    FieldDraw d;
    d.mu = background_->realize(background_params(params), noise.head(static_cast<Index>(e_bg_)));
    if (trigger_) {
        d.phi = trigger_->realize(trigger_params(params), noise.tail(static_cast<Index>(e_tr_)));
    }
    return d;
}

nlohmann::json VariationalModel::describe(std::span<const double> params) const {
    nlohmann::json j;
    j["background"] = background_->describe(background_params(params));
    j["trigger"] = trigger_ ? trigger_->describe(trigger_params(params)) : nlohmann::json(nullptr);
    return j;
}

ElboEstimate elbo_estimate(const VariationalModel& model, const PreparedData& data,
                           std::span<const double> params, int n_samples, std::uint64_t seed,
                           bool with_gradient, std::uint64_t stream) {
    if (n_samples < 1) throw std::invalid_argument("elbo_estimate needs at least one sample");
    std::mt19937_64 rng = make_rng(seed, stream);
    ElboEstimate est;
    const auto np = static_cast<Index>(model.parameter_count());
    if (with_gradient) est.gradient = Eigen::VectorXd::Zero(np);
    Eigen::VectorXd g;
    double sum = 0.0, sum_sq = 0.0;
    int ok = 0;
    for (int s = 0; s < n_samples; ++s) {
        const Eigen::VectorXd noise = standard_normal(rng, model.noise_dimension());
        const double v = model.elbo_draw(data, params, noise, with_gradient ? &g : nullptr);
        if (!std::isfinite(v)) {
            ++est.failed_draws;
            continue;
        }
        ++ok;
        sum += v;
        sum_sq += v * v;
        if (with_gradient) est.gradient += g;
    }
    if (ok == 0) throw std::runtime_error("every ELBO draw failed");
    const double mean = sum / ok;
    if (with_gradient) est.gradient /= static_cast<double>(ok);
    est.standard_error =
        ok > 1 ? std::sqrt(std::max(0.0, (sum_sq - ok * mean * mean) / (ok - 1)) / ok) : 0.0;
    est.value = est.failed_draws > 0 ? kNegInf : mean;
    return est;
}

namespace {

// Every draw allocates and frees several large matrices; keep them on the heap instead of
// returning them to the kernel each time.
void keep_large_allocations() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
        return true;
    }();
    (void)done;
#endif
}

}  // namespace

FitResult fit(const VariationalModel& model, const PreparedData& data, const Eigen::VectorXd& init,
              const OptimizerConfig& config, const ProgressCallback& progress) {
    keep_large_allocations();
    if (config.iterations < 0 || config.mc_samples < 1 || !(config.step_size > 0.0)) {
        throw std::invalid_argument("invalid optimizer configuration");
    }
    if (static_cast<std::size_t>(init.size()) != model.parameter_count()) {
        throw std::invalid_argument("initial parameters do not match the model");
    }
    const auto start = std::chrono::steady_clock::now();
    FitResult res;
    res.seed = config.seed;
    res.parameters = init;
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(init.size()), m2 = m1;
    int steps = 0;
    const int n = config.iterations;
    for (int it = 0; it < n; ++it) {
        ElboEstimate est;
        bool usable = true;
        try {
            est = elbo_estimate(model, data, std::span<const double>(res.parameters.data(), model.parameter_count()), config.mc_samples, config.seed, true,
                                static_cast<std::uint64_t>(it) + 1);
        } catch (const std::runtime_error&) {
            usable = false;
            est.value = kNegInf;
        }
        res.elbo_trace.push_back(est.value);
        if (progress) progress(it, est.value);
        if (!usable || !std::isfinite(est.value) || !est.gradient.allFinite()) {
            ++res.skipped_steps;
            continue;
        }
        ++steps;
        const Eigen::VectorXd& g = est.gradient;
        m1 = config.beta1 * m1 + (1.0 - config.beta1) * g;
        m2 = config.beta2 * m2 + (1.0 - config.beta2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(config.beta1, steps);
        const double c2 = 1.0 - std::pow(config.beta2, steps);
        double lr = config.step_size;
        if (config.cosine_decay) {
            lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(it) / n));
        }
        res.parameters.array() +=
            lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + config.epsilon);
    }
    if (n > 0 && 2 * res.skipped_steps > n) {
        std::ostringstream os;
        os << "fit skipped " << res.skipped_steps << " of " << n << " steps";
        throw FitError(os.str());
    }
    try {
        res.final_elbo = elbo_estimate(model, data, std::span<const double>(res.parameters.data(), model.parameter_count()), config.final_samples,
                                       config.seed, false, 0)
                             .value;
    } catch (const std::runtime_error&) {
        res.final_elbo = kNegInf;
    }
    res.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

std::size_t argmax_elbo(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("argmax_elbo of an empty list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        const double b = std::isnan(v[best]) ? kNegInf : v[best];
        if (v[i] > b) best = i;
    }
    return best;
}

RestartOutcome multi_restart(const VariationalModel& model, const PreparedData& data,
                             const Eigen::VectorXd& init, const OptimizerConfig& config,
                             const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw std::invalid_argument("multi_restart needs at least one seed");
    RestartOutcome out;
    for (std::uint64_t seed : seeds) {
        OptimizerConfig c = config;
        c.seed = seed;
        try {
            out.runs.push_back(fit(model, data, init, c));
        } catch (const std::exception& e) {
            out.errors.push_back("seed " + std::to_string(seed) + ": " + e.what());
        }
    }
    if (out.runs.empty()) {
        std::string msg = "every restart failed";
        for (const auto& e : out.errors) msg += "; " + e;
        throw FitError(msg);
    }
    std::vector<double> finals;
    for (const auto& r : out.runs) finals.push_back(r.final_elbo);
    out.best_index = argmax_elbo(finals);
    out.best = out.runs[out.best_index];
    return out;
}

}  // namespace nphawkes
