#pragma once

#include "nphawkes/hawkes_model.hpp"

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nphawkes {

struct GroundTruth {
    RateFunction mu;
    RateFunction phi;  ///< zero outside the trigger support
    SpatioTemporalWindow window;
    std::string name;
};

/// Built-in synthetic ground truths 1, 2 and 3 on the 10 x 10 x 10 window.
GroundTruth scenario(int k);

class BoundViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ExplosionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 1.2 times the largest value of f on a probe^3 grid over the box.
double rate_bound(const RateFunction& f, const Box& box, std::size_t probe = 64, double factor = 1.2);

/// Thinning of a homogeneous process with rate `bound`. Points come back sorted by time.
std::vector<Point3> simulate_inhom_poisson(const RateFunction& rate, const Box& region, double bound,
                                           std::mt19937_64& rng);
std::vector<Point3> simulate_inhom_poisson(const RateFunction& rate, const Box& region, double bound,
                                           std::uint64_t seed);

struct SimulationReport {
    EventSequence events;
    std::vector<int> generation;  ///< 0 for background events
    std::vector<long> parent;     ///< index into `events`, -1 for background events

    /// Whole branching cascade, including offspring that left the window and their descendants.
    std::size_t cascade_size{0};
    std::size_t cascade_immigrants{0};
    double offspring_sum{0.0};
    double offspring_sum_sq{0.0};
};

/// Cluster simulation: immigrants from mu, then every event draws offspring from phi over the
/// full support. Only events that lie in the window and whose ancestors all lie in the window
/// are reported, which is the same as drawing offspring over the clipped support.
SimulationReport simulate_hawkes(const GroundTruth& truth, std::uint64_t seed,
                                 int max_generations = 10000);

}  // namespace nphawkes
