#include "nphawkes/diagnostics.hpp"

#include "nphawkes/random.hpp"
#include "nphawkes/simulate.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nphawkes {

IntensityFunction conditional_intensity(std::shared_ptr<const RateField> mu,
                                        std::shared_ptr<const RateField> phi,
                                        const EventSequence& history,
                                        const SpatioTemporalWindow& window) {
    if (!mu) throw std::invalid_argument("conditional_intensity needs a background field");
    std::vector<Point3> events = history.events;
    return [mu, phi, events, window](std::span<const Point3> q) {
        Eigen::VectorXd lambda = mu->at_points(q);
        if (!phi || events.empty()) return lambda;
        std::vector<Point3> lags;
        std::vector<Eigen::Index> owner;
        for (std::size_t i = 0; i < q.size(); ++i) {
            auto hi = std::lower_bound(events.begin(), events.end(), q[i].t,
                                       [](const Point3& e, double t) { return e.t < t; });
            for (auto it = hi; it != events.begin();) {
                --it;
                const Point3 lag = q[i] - *it;
                if (lag.t > window.T_phi) break;
                if (window.in_support(lag)) {
                    lags.push_back(lag);
                    owner.push_back(static_cast<Eigen::Index>(i));
                }
            }
        }
        if (!lags.empty()) {
            const Eigen::VectorXd contrib = phi->at_points(lags);
            for (std::size_t k = 0; k < lags.size(); ++k) lambda[owner[k]] += contrib[static_cast<Eigen::Index>(k)];
        }
        return lambda;
    };
}

double median_rate(const IntensityFunction& lambda, std::span<const Point3> probe) {
    if (probe.empty()) throw std::invalid_argument("median_rate needs probe points");
    const Eigen::VectorXd v = lambda(probe);
    std::vector<double> s(v.data(), v.data() + v.size());
    const std::size_t mid = s.size() / 2;
    std::nth_element(s.begin(), s.begin() + static_cast<long>(mid), s.end());
    if (s.size() % 2 == 1) return s[mid];
    const double upper = s[mid];
    const double lower = *std::max_element(s.begin(), s.begin() + static_cast<long>(mid));
    return 0.5 * (lower + upper);
}

ResidualProcess super_thin(const EventSequence& data, const IntensityFunction& lambda,
                           const SpatioTemporalWindow& window, double k, std::uint64_t seed) {
    if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("super-thinning rate k must be positive");
    std::mt19937_64 rng = make_rng(seed, 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    ResidualProcess res;
    res.k = k;
    struct Item {
        Point3 p;
        bool retained;
    };
    std::vector<Item> items;
    if (!data.empty()) {
        const Eigen::VectorXd at_events = lambda(data.events);
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double l = at_events[static_cast<Eigen::Index>(i)];
            const double keep = l > 0.0 ? std::min(k / l, 1.0) : 1.0;
            if (unif(rng) < keep) items.push_back({data.events[i], true});
        }
    }
    // Candidates of a rate-k process, each kept with probability max(k - lambda, 0) / k.
    std::poisson_distribution<long> count(k * window.volume());
    const long n = count(rng);
    const Box box = window.domain();
    std::vector<Point3> cand(static_cast<std::size_t>(n));
    for (auto& c : cand) {
        c = {box.lo[0] + unif(rng) * box.extent(0), box.lo[1] + unif(rng) * box.extent(1),
             box.lo[2] + unif(rng) * box.extent(2)};
    }
    if (!cand.empty()) {
        const Eigen::VectorXd at_cand = lambda(cand);
        for (std::size_t i = 0; i < cand.size(); ++i) {
            const double rate = std::max(k - at_cand[static_cast<Eigen::Index>(i)], 0.0);
            if (unif(rng) * k < rate) items.push_back({cand[i], false});
        }
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.p.t < b.p.t; });
    for (const auto& it : items) {
        res.events.push_back(it.p);
        res.retained.push_back(it.retained);
        if (it.retained) {
            ++res.n_retained;
        } else {
            ++res.n_simulated;
        }
    }
    return res;
}

double kolmogorov_tail(double x) {
    if (x <= 0.0) return 1.0;
    // Below this the alternating series has not converged in 100 terms; the tail is 1 to 1e-9.
    if (x < 0.2) return 1.0;
    double sum = 0.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * x * x);
        sum += (j % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-300) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

TestResult ks_exponential_test(const ResidualProcess& residual, double t_max) {
    const std::size_t n = residual.events.size();
    if (n < 2) throw std::invalid_argument("KS test needs at least two residual events");
    if (!(t_max > 0.0)) throw std::invalid_argument("KS test needs a positive time horizon");
    const double rate = static_cast<double>(n) / t_max;
    std::vector<double> gaps(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) gaps[i] = residual.events[i + 1].t - residual.events[i].t;
    std::sort(gaps.begin(), gaps.end());
    const double m = static_cast<double>(gaps.size());
    double d = 0.0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        const double f = 1.0 - std::exp(-rate * gaps[i]);
        d = std::max({d, static_cast<double>(i + 1) / m - f, f - static_cast<double>(i) / m});
    }
    const double sq = std::sqrt(m);
    return {d, kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d)};
}

QuadratResult quadrat_chi2_test(const ResidualProcess& residual, const SpatioTemporalWindow& window,
                                int n_grid) {
    if (n_grid < 1) throw std::invalid_argument("n_grid must be positive");
    const std::size_t n = residual.events.size();
    if (n < 1) throw std::invalid_argument("quadrat test needs at least one residual event");
    QuadratResult out;
    int g = n_grid;
    while (g > 1 && static_cast<double>(n) / (g * g) < 5.0) {
        const int next = g / 2;
        out.warnings.push_back("expected quadrat count below 5 with n_grid = " + std::to_string(g) +
                               "; coarsening to " + std::to_string(next));
        g = next;
    }
    out.n_grid_effective = g;
    std::vector<double> counts(static_cast<std::size_t>(g * g), 0.0);
    for (const Point3& p : residual.events) {
        const int ix = std::clamp(static_cast<int>(p.x / window.X * g), 0, g - 1);
        const int iy = std::clamp(static_cast<int>(p.y / window.Y * g), 0, g - 1);
        counts[static_cast<std::size_t>(ix * g + iy)] += 1.0;
    }
    const double e = static_cast<double>(n) / (g * g);
    double chi2 = 0.0;
    for (double o : counts) chi2 += (o - e) * (o - e) / e;
    out.chi2 = chi2;
    const int df = g * g - 1;
    out.p_value = df > 0 ? boost::math::gamma_q(0.5 * df, 0.5 * chi2) : 1.0;
    return out;
}

}  // namespace nphawkes
