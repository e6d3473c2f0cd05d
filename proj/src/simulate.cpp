#include "nphawkes/simulate.hpp"

#include "nphawkes/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace nphawkes {

namespace {
constexpr std::size_t kMaxCascade = 50'000'000;
}

GroundTruth scenario(int k) {
    GroundTruth g;
    g.window = SpatioTemporalWindow{10.0, 10.0, 10.0, 0.5, 0.3, 0.3};
    const SpatioTemporalWindow w = g.window;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    auto gaussian_trigger = [w](const Point3& d) {
        if (!w.in_support(d)) return 0.0;
        return 5.0 * std::exp(-(d.x * d.x + d.y * d.y) / 0.02) * std::exp(-d.t);
    };
    auto additive_mu = [w](const Point3& p) {
        return (1.5 + std::sin(two_pi * p.t / w.T)) + (1.5 + std::sin(two_pi * p.x / w.X)) +
               (1.5 + std::sin(two_pi * p.y / w.Y));
    };
    switch (k) {
        case 1:
            g.name = "scenario-1";
            g.mu = [](const Point3&) { return 4.5; };
            g.phi = gaussian_trigger;
            break;
        case 2:
            g.name = "scenario-2";
            g.mu = additive_mu;
            g.phi = gaussian_trigger;
            break;
        case 3:
            g.name = "scenario-3";
            g.mu = [w, additive_mu](const Point3& p) {
                return additive_mu(p) + std::sin(two_pi * p.t / w.T) * std::sin(two_pi * p.x / w.X) *
                                            std::sin(two_pi * p.y / w.Y);
            };
            g.phi = [w](const Point3& d) {
                if (!w.in_support(d)) return 0.0;
                const double s = d.t / w.T_phi;
                return (1.0 + 10.0 * s * (1.0 - s)) *
                       std::exp(-(d.x * d.x / (w.X_phi * w.X_phi) + d.y * d.y / (w.Y_phi * w.Y_phi)));
            };
            break;
        default:
            throw std::invalid_argument("unknown scenario " + std::to_string(k) + " (expected 1, 2 or 3)");
    }
    return g;
}

double rate_bound(const RateFunction& f, const Box& box, std::size_t probe, double factor) {
    const TensorGrid g = TensorGrid::equidistant(box, {probe, probe, probe});
    double best = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) best = std::max(best, f(g.node(i)));
    return factor * best;
}

std::vector<Point3> simulate_inhom_poisson(const RateFunction& rate, const Box& region, double bound,
                                           std::mt19937_64& rng) {
    if (!(bound > 0.0)) throw std::invalid_argument("rate bound must be positive");
    std::poisson_distribution<long> count(bound * region.volume());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const long n = count(rng);
    std::vector<Point3> out;
    for (long i = 0; i < n; ++i) {
        const Point3 p{region.lo[0] + unif(rng) * region.extent(0),
                       region.lo[1] + unif(rng) * region.extent(1),
                       region.lo[2] + unif(rng) * region.extent(2)};
        const double r = rate(p);
        if (r > bound) {
            std::ostringstream os;
            os << "rate " << r << " exceeds the thinning bound " << bound << " at (" << p.t << ", "
               << p.x << ", " << p.y << ")";
            throw BoundViolation(os.str());
        }
        if (unif(rng) * bound < r) out.push_back(p);
    }
    std::sort(out.begin(), out.end(), [](const Point3& a, const Point3& b) { return a.t < b.t; });
    return out;
}

std::vector<Point3> simulate_inhom_poisson(const RateFunction& rate, const Box& region, double bound,
                                           std::uint64_t seed) {
    std::mt19937_64 rng = make_rng(seed, 0);
    return simulate_inhom_poisson(rate, region, bound, rng);
}

SimulationReport simulate_hawkes(const GroundTruth& truth, std::uint64_t seed, int max_generations) {
    truth.window.validate();
    const Box domain = truth.window.domain();
    const Box support = truth.window.support();
    const double mu_bound = rate_bound(truth.mu, domain);
    const double phi_bound = rate_bound(truth.phi, support);
    std::mt19937_64 rng = make_rng(seed, 0);

    struct Node {
        Point3 p;
        int generation;
        long parent;
        bool kept;
    };
    std::vector<Node> all;
    if (mu_bound > 0.0) {
        for (const Point3& p : simulate_inhom_poisson(truth.mu, domain, mu_bound, rng)) {
            all.push_back({p, 0, -1, true});
        }
    }
    SimulationReport rep;
    rep.cascade_immigrants = all.size();
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (phi_bound <= 0.0) break;
        const std::vector<Point3> lags = simulate_inhom_poisson(truth.phi, support, phi_bound, rng);
        const double c = static_cast<double>(lags.size());
        rep.offspring_sum += c;
        rep.offspring_sum_sq += c * c;
        const Node parent = all[i];
        if (!lags.empty() && parent.generation + 1 > max_generations) {
            throw ExplosionError("cascade exceeded " + std::to_string(max_generations) + " generations");
        }
        if (all.size() + lags.size() > kMaxCascade) {
            throw ExplosionError("cascade exceeded " + std::to_string(kMaxCascade) + " events");
        }
        for (const Point3& lag : lags) {
            const Point3 child = parent.p + lag;
            all.push_back({child, parent.generation + 1, static_cast<long>(i),
                           parent.kept && domain.contains(child)});
        }
    }
    if (phi_bound <= 0.0) rep.offspring_sum = rep.offspring_sum_sq = 0.0;
    rep.cascade_size = all.size();

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i].kept) kept.push_back(i);
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [&](std::size_t a, std::size_t b) { return all[a].p.t < all[b].p.t; });
    std::vector<long> position(all.size(), -1);
    for (std::size_t k = 0; k < kept.size(); ++k) position[kept[k]] = static_cast<long>(k);
    for (std::size_t idx : kept) {
        rep.events.events.push_back(all[idx].p);
        rep.generation.push_back(all[idx].generation);
        rep.parent.push_back(all[idx].parent < 0 ? -1 : position[static_cast<std::size_t>(all[idx].parent)]);
    }
    return rep;
}

}  // namespace nphawkes
