#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace nphawkes {

/// Generator for a (seed, stream) pair; every stream is reproducible on its own.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

inline Eigen::VectorXd standard_normal(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = nd(rng);
    return v;
}

}  // namespace nphawkes
