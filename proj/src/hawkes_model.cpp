#include "nphawkes/hawkes_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace nphawkes {

void SpatioTemporalWindow::validate() const {
    const std::array<std::pair<const char*, double>, 6> fields{
        {{"T", T}, {"X", X}, {"Y", Y}, {"T_phi", T_phi}, {"X_phi", X_phi}, {"Y_phi", Y_phi}}};
    for (const auto& [name, v] : fields) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("window extent ") + name + " must be positive");
        }
    }
    if (T_phi > T || X_phi > X || Y_phi > Y) {
        throw std::invalid_argument("trigger support must not exceed the window");
    }
}

EventSequence ingest_events(std::vector<Point3> raw, const SpatioTemporalWindow& window,
                            std::vector<std::string>* warnings) {
    window.validate();
    const Box box = window.domain();
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const Point3& p = raw[i];
        if (!std::isfinite(p.t) || !std::isfinite(p.x) || !std::isfinite(p.y) || !box.contains(p)) {
            std::ostringstream os;
            os << "event " << i << " (" << p.t << ", " << p.x << ", " << p.y
               << ") lies outside the window";
            throw std::invalid_argument(os.str());
        }
    }
    std::stable_sort(raw.begin(), raw.end(),
                     [](const Point3& a, const Point3& b) { return a.t < b.t; });
    const double eps = 1e-9 * window.T;
    std::size_t moved = 0;
    for (std::size_t i = 1; i < raw.size(); ++i) {
        if (raw[i].t <= raw[i - 1].t) {
            raw[i].t = raw[i - 1].t + eps;
            ++moved;
        }
    }
    if (moved > 0 && warnings != nullptr) {
        std::ostringstream os;
        os << moved << " tied timestamp(s) shifted by " << eps;
        warnings->push_back(os.str());
    }
    return EventSequence{std::move(raw)};
}

double LinkFunction::operator()(double v) const noexcept {
    switch (kind) {
        case LinkKind::Softplus:
            return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
        case LinkKind::Exp:
            return std::exp(v);
        case LinkKind::Sigmoid:
            return v >= 0.0 ? alpha / (1.0 + std::exp(-v)) : alpha * std::exp(v) / (1.0 + std::exp(v));
    }
    return 0.0;
}

double LinkFunction::derivative(double v) const noexcept {
    const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    switch (kind) {
        case LinkKind::Softplus:
            return s;
        case LinkKind::Exp:
            return std::exp(v);
        case LinkKind::Sigmoid:
            return alpha * s * (1.0 - s);
    }
    return 0.0;
}

double apply_link(const LinkFunction& link, double v) {
    if (link.kind == LinkKind::Sigmoid && !(link.alpha > 0.0)) {
        throw std::domain_error("sigmoid link needs a positive scale");
    }
    return link(v);
}

double inverse_link(const LinkFunction& link, double rate) {
    if (!(rate > 0.0)) throw std::domain_error("inverse link needs a positive rate");
    switch (link.kind) {
        case LinkKind::Softplus: return rate > 30.0 ? rate + std::log1p(-std::exp(-rate)) : std::log(std::expm1(rate));
        case LinkKind::Exp: return std::log(rate);
        case LinkKind::Sigmoid:
            if (!(rate < link.alpha)) throw std::domain_error("rate outside the range of the sigmoid link");
            return std::log(rate / (link.alpha - rate));
    }
    return 0.0;
}

std::string to_string(LinkKind kind) {
    switch (kind) {
        case LinkKind::Softplus: return "softplus";
        case LinkKind::Exp: return "exp";
        case LinkKind::Sigmoid: return "sigmoid";
    }
    return "?";
}

LinkKind parse_link(const std::string& name) {
    if (name == "softplus") return LinkKind::Softplus;
    if (name == "exp") return LinkKind::Exp;
    if (name == "sigmoid") return LinkKind::Sigmoid;
    throw std::invalid_argument("unknown link function '" + name + "'");
}

double default_sigmoid_alpha(std::size_t n_events, const SpatioTemporalWindow& window) {
    const double density = static_cast<double>(n_events) / window.volume();
    return density > 0.0 ? 10.0 * density : 10.0;
}

QuadratureGrid QuadratureGrid::trapezoid(const Box& box, std::array<std::size_t, 3> counts) {
    QuadratureGrid q;
    q.grid = TensorGrid::equidistant(box, counts);
    for (std::size_t d = 0; d < 3; ++d) {
        const std::size_t n = counts[d];
        std::vector<double>& w = q.weights[d];
        if (n == 1) {
            w = {box.extent(d)};
            continue;
        }
        const double h = box.extent(d) / static_cast<double>(n - 1);
        w.assign(n, h);
        w.front() = w.back() = 0.5 * h;
    }
    return q;
}

Eigen::VectorXd QuadratureGrid::flat_weights() const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(size()));
    Eigen::Index f = 0;
    for (double a : weights[0])
        for (double b : weights[1])
            for (double c : weights[2]) w[f++] = a * b * c;
    return w;
}

std::array<std::size_t, 3> mu_grid_counts(GridProfile profile) noexcept {
    return profile == GridProfile::Full ? std::array<std::size_t, 3>{70, 70, 70}
                                        : std::array<std::size_t, 3>{20, 20, 20};
}

std::array<std::size_t, 3> phi_grid_counts(GridProfile profile) noexcept {
    return profile == GridProfile::Full ? std::array<std::size_t, 3>{40, 40, 40}
                                        : std::array<std::size_t, 3>{12, 12, 12};
}

QuadratureSet make_quadrature(const SpatioTemporalWindow& window, GridProfile profile) {
    return make_quadrature(window, mu_grid_counts(profile), phi_grid_counts(profile));
}

QuadratureSet make_quadrature(const SpatioTemporalWindow& window, std::array<std::size_t, 3> mu_counts,
                              std::array<std::size_t, 3> phi_counts) {
    window.validate();
    return {QuadratureGrid::trapezoid(window.domain(), mu_counts),
            QuadratureGrid::trapezoid(window.support(), phi_counts)};
}

ClipBounds compensator_trigger_clip(const Point3& e, const SpatioTemporalWindow& w) {
    ClipBounds b;
    b.lo = {0.0, std::max(-w.X_phi, -e.x), std::max(-w.Y_phi, -e.y)};
    b.hi = {std::min(w.T_phi, w.T - e.t), std::min(w.X_phi, w.X - e.x), std::min(w.Y_phi, w.Y - e.y)};
    for (std::size_t d = 0; d < 3; ++d) b.hi[d] = std::max(b.hi[d], b.lo[d]);
    return b;
}

std::vector<double> clipped_axis_weights(const std::vector<double>& z, double a, double b) {
    std::vector<double> c(z.size(), 0.0);
    if (z.size() == 1) {
        c[0] = std::max(0.0, b - a);
        return c;
    }
    a = std::max(a, z.front());
    b = std::min(b, z.back());
    if (!(b > a)) return c;
    for (std::size_t k = 0; k + 1 < z.size(); ++k) {
        const double lo = std::max(a, z[k]);
        const double hi = std::min(b, z[k + 1]);
        if (!(hi > lo)) continue;
        const double h = z[k + 1] - z[k];
        const double r0 = z[k + 1] - lo, r1 = z[k + 1] - hi;
        const double s0 = lo - z[k], s1 = hi - z[k];
        c[k] += (r0 * r0 - r1 * r1) / (2.0 * h);
        c[k + 1] += (s1 * s1 - s0 * s0) / (2.0 * h);
    }
    return c;
}

std::vector<EventPair> collect_pairs(const EventSequence& data, const SpatioTemporalWindow& window) {
    std::vector<EventPair> pairs;
    const auto& ev = data.events;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        for (std::size_t j = i; j-- > 0;) {
            const Point3 lag = ev[i] - ev[j];
            if (lag.t > window.T_phi) break;
            if (lag.t > 0.0 && window.in_support(lag)) pairs.push_back({i, j, lag});
        }
    }
    return pairs;
}

PreparedData prepare_data(const EventSequence& data, const SpatioTemporalWindow& window,
                          const QuadratureSet& grids, bool with_trigger) {
    window.validate();
    PreparedData p;
    p.window = window;
    p.data = data;
    p.mu_grid = grids.mu;
    p.phi_grid = grids.phi;
    p.has_trigger = with_trigger;
    p.mu_weights = grids.mu.flat_weights();
    if (!with_trigger) {
        p.phi_weights.resize(0);
        return p;
    }
    p.pairs = collect_pairs(data, window);
    p.pair_lags.reserve(p.pairs.size());
    for (const auto& pr : p.pairs) p.pair_lags.push_back(pr.lag);

    const auto& axes = grids.phi.grid.axes;
    const auto n = grids.phi.grid.counts();
    p.phi_weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grids.phi.size()));
    for (const Point3& e : data.events) {
        const ClipBounds b = compensator_trigger_clip(e, window);
        const auto wt = clipped_axis_weights(axes[0], b.lo[0], b.hi[0]);
        const auto wx = clipped_axis_weights(axes[1], b.lo[1], b.hi[1]);
        const auto wy = clipped_axis_weights(axes[2], b.lo[2], b.hi[2]);
        Eigen::Index f = 0;
        for (std::size_t i = 0; i < n[0]; ++i) {
            if (wt[i] == 0.0) {
                f += static_cast<Eigen::Index>(n[1] * n[2]);
                continue;
            }
            for (std::size_t j = 0; j < n[1]; ++j) {
                const double a = wt[i] * wx[j];
                for (std::size_t k = 0; k < n[2]; ++k) p.phi_weights[f++] += a * wy[k];
            }
        }
    }
    return p;
}

double log_likelihood(const PreparedData& p, const IntensityValues& r, LikelihoodGradient* grad) {
    const auto n = static_cast<Eigen::Index>(p.data.size());
    if (r.mu_events.size() != n || r.mu_nodes.size() != p.mu_weights.size()) {
        throw std::invalid_argument("background rates do not match the prepared data");
    }
    const bool trig = p.has_trigger;
    if (trig && (r.phi_nodes.size() != p.phi_weights.size() ||
                 r.phi_pairs.size() != static_cast<Eigen::Index>(p.pairs.size()))) {
        throw std::invalid_argument("trigger rates do not match the prepared data");
    }
    Eigen::VectorXd lambda = r.mu_events;
    if (trig) {
        for (std::size_t k = 0; k < p.pairs.size(); ++k) {
            lambda[static_cast<Eigen::Index>(p.pairs[k].child)] += r.phi_pairs[static_cast<Eigen::Index>(k)];
        }
    }
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(lambda[i] > 0.0) || !std::isfinite(lambda[i])) {
            return -std::numeric_limits<double>::infinity();
        }
        ll += std::log(lambda[i]);
    }
    ll -= p.mu_weights.dot(r.mu_nodes);
    if (trig) ll -= p.phi_weights.dot(r.phi_nodes);

    if (grad != nullptr) {
        grad->mu_events = lambda.cwiseInverse();
        grad->mu_nodes = -p.mu_weights;
        if (trig) {
            grad->phi_nodes = -p.phi_weights;
            grad->phi_pairs.resize(static_cast<Eigen::Index>(p.pairs.size()));
            for (std::size_t k = 0; k < p.pairs.size(); ++k) {
                grad->phi_pairs[static_cast<Eigen::Index>(k)] =
                    grad->mu_events[static_cast<Eigen::Index>(p.pairs[k].child)];
            }
        } else {
            grad->phi_nodes.resize(0);
            grad->phi_pairs.resize(0);
        }
    }
    return ll;
}

Eigen::VectorXd evaluate_on_grid(const QuadratureGrid& grid, const RateFunction& f) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) v[static_cast<Eigen::Index>(i)] = f(grid.grid.node(i));
    return v;
}

IntensityValues evaluate_rates(const PreparedData& p, const RateFunction& mu, const RateFunction& phi) {
    IntensityValues r;
    r.mu_nodes = evaluate_on_grid(p.mu_grid, mu);
    r.mu_events.resize(static_cast<Eigen::Index>(p.data.size()));
    for (std::size_t i = 0; i < p.data.size(); ++i) {
        r.mu_events[static_cast<Eigen::Index>(i)] = mu(p.data.events[i]);
    }
    if (p.has_trigger) {
        r.phi_nodes = evaluate_on_grid(p.phi_grid, phi);
        r.phi_pairs.resize(static_cast<Eigen::Index>(p.pair_lags.size()));
        for (std::size_t k = 0; k < p.pair_lags.size(); ++k) {
            r.phi_pairs[static_cast<Eigen::Index>(k)] = phi(p.pair_lags[k]);
        }
    }
    return r;
}

double log_likelihood(const PreparedData& p, const RateFunction& mu, const RateFunction& phi) {
    return log_likelihood(p, evaluate_rates(p, mu, phi));
}

double multi_sequence_log_likelihood(std::span<const PreparedData> sequences, const RateFunction& mu,
                                     const RateFunction& phi) {
    double total = 0.0;
    for (const auto& p : sequences) total += log_likelihood(p, mu, phi);
    return total;
}

double intensity_at(double mu_value, const RateFunction& phi, std::span<const Point3> history,
                    const Point3& q, const SpatioTemporalWindow& window) {
    double lambda = mu_value;
    for (const Point3& e : history) {
        if (!(e.t < q.t)) continue;
        const Point3 lag = q - e;
        if (window.in_support(lag)) lambda += phi(lag);
    }
    return lambda;
}

double integrate(const QuadratureGrid& grid, const Eigen::VectorXd& node_values) {
    if (node_values.size() != static_cast<Eigen::Index>(grid.size())) {
        throw std::invalid_argument("node values do not match the grid");
    }
    return grid.flat_weights().dot(node_values);
}

L1Norms l1_norms(const QuadratureSet& grids, const Eigen::VectorXd& mu_nodes,
                 const Eigen::VectorXd& phi_nodes) {
    L1Norms n;
    n.mu = integrate(grids.mu, mu_nodes);
    n.phi = phi_nodes.size() == 0 ? 0.0 : integrate(grids.phi, phi_nodes);
    return n;
}

double expected_total_events(double mu_norm, double phi_norm) {
    if (phi_norm < 0.0) throw std::domain_error("trigger norm must be non-negative");
    if (phi_norm >= 1.0) {
        throw std::domain_error("trigger norm >= 1: the process is not stationary");
    }
    return mu_norm / (1.0 - phi_norm);
}

std::vector<double> spatial_average(const QuadratureGrid& grid, const Eigen::VectorXd& v) {
    if (v.size() != static_cast<Eigen::Index>(grid.size())) {
        throw std::invalid_argument("node values do not match the grid");
    }
    const auto n = grid.grid.counts();
    double area = 0.0;
    for (double a : grid.weights[1])
        for (double b : grid.weights[2]) area += a * b;
    std::vector<double> out(n[0], 0.0);
    Eigen::Index f = 0;
    for (std::size_t i = 0; i < n[0]; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n[1]; ++j)
            for (std::size_t k = 0; k < n[2]; ++k) s += grid.weights[1][j] * grid.weights[2][k] * v[f++];
        out[i] = s / area;
    }
    return out;
}

}  // namespace nphawkes
