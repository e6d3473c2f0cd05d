#pragma once

#include "nphawkes/geometry.hpp"
#include "nphawkes/kernels.hpp"

#include <Eigen/Core>

#include <array>
#include <span>
#include <vector>

namespace nphawkes {

/// Equidistant inducing locations over a box. Points are the flattened tensor grid.
class InducingGrid {
public:
    InducingGrid() = default;
    InducingGrid(const Box& domain, std::array<std::size_t, 3> counts);
    explicit InducingGrid(TensorGrid grid);

    const TensorGrid& tensor() const noexcept { return grid_; }
    const std::vector<Point3>& points() const noexcept { return points_; }
    std::size_t size() const noexcept { return points_.size(); }
    std::array<std::size_t, 3> counts() const noexcept { return grid_.counts(); }

private:
    TensorGrid grid_;
    std::vector<Point3> points_;
};

/// q(u) = N(mean, factor * factor^T) with a lower-triangular factor.
struct InducingPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd factor;

    void validate() const;
    Eigen::MatrixXd covariance() const { return factor * factor.transpose(); }
};

/// One latent function: kernel, inducing grid, q(u) and the points where the latent values are needed.
struct SparseGPBlock {
    KernelSpec kernel;
    InducingGrid grid;
    InducingPosterior posterior;
    std::vector<Point3> targets;
};

/// Cholesky of K_ZZ. A well-conditioned matrix is factorised without jitter; otherwise the
/// escalating schedule of stable_cholesky applies.
struct InducingFactor {
    Eigen::MatrixXd gram;                 ///< K_ZZ without jitter
    Eigen::LLT<Eigen::MatrixXd> llt;      ///< factor of K_ZZ + jitter * I
    double jitter{0.0};
    double relative_jitter{0.0};

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return llt.solve(b); }
};

InducingFactor factorize_gram(Eigen::MatrixXd gram);
InducingFactor factorize_inducing(const KernelSpec& spec, const InducingGrid& grid);

/// Per-block kernel factors of a fixed set of scattered targets. For every term and block it
/// holds the factor values (targets x block sub-grid) and, for each hyperparameter the block
/// depends on, the derivative of those values with respect to the log of that parameter.
struct ScatteredBasis {
    struct Block {
        Eigen::MatrixXd values;
        std::vector<std::pair<int, Eigen::MatrixXd>> derivatives;
    };
    std::size_t n{0};
    std::vector<std::vector<Block>> terms;
};

/// Fast products with K_{T,Z} for an inducing tensor grid, exploiting the product decomposition
/// of the kernel. Targets are either scattered points or another tensor grid.
class CrossCovariance {
public:
    CrossCovariance(const KernelSpec& spec, const InducingGrid& grid);

    const KernelSpec& spec() const noexcept { return spec_; }
    std::size_t inducing_size() const noexcept { return m_; }

    /// Explicit K_{T,Z} for scattered targets.
    Eigen::MatrixXd rows(std::span<const Point3> targets) const;

    /// K_{G,Z} w and K_{G,Z}^T g for a tensor grid of targets.
    Eigen::VectorXd apply_grid(const TensorGrid& targets, const Eigen::VectorXd& w) const;
    Eigen::VectorXd apply_grid_transpose(const TensorGrid& targets, const Eigen::VectorXd& g) const;

    ScatteredBasis scattered_basis(std::span<const Point3> targets, bool with_derivatives) const;
    /// K_{T,Z} w and K_{T,Z}^T g through a precomputed basis.
    Eigen::VectorXd apply_scattered(const ScatteredBasis& basis, const Eigen::VectorXd& w) const;
    Eigen::VectorXd apply_scattered_transpose(const ScatteredBasis& basis, const Eigen::VectorXd& g) const;
    void accumulate_scattered_gradient(const ScatteredBasis& basis, const Eigen::VectorXd& g,
                                       const Eigen::VectorXd& w, std::span<double> grad) const;

    /// grad[p] += sum_{t,m} g_t w_m d k(x_t, z_m) / d log theta_p
    void accumulate_grid_gradient(const TensorGrid& targets, const Eigen::VectorXd& g,
                                  const Eigen::VectorXd& w, std::span<double> grad) const;
    void accumulate_scattered_gradient(std::span<const Point3> targets, const Eigen::VectorXd& g,
                                       const Eigen::VectorXd& w, std::span<double> grad) const;
    /// grad[p] += sum_{t,m} C(t,m) d k(x_t, z_m) / d log theta_p for a dense coefficient matrix.
    void accumulate_scattered_gradient(std::span<const Point3> targets, const Eigen::MatrixXd& coeff,
                                       std::span<double> grad) const;

private:
    struct BlockLayout {
        std::vector<Point3> inducing_nodes;  ///< inducing sub-grid of the block's dimensions
        std::vector<int> sub_index;          ///< flat inducing index -> block sub-grid index
    };

    template <typename Coeff>
    void scattered_gradient_impl(std::span<const Point3> targets, Coeff&& coeff,
                                 std::span<double> grad) const;
    Eigen::MatrixXd block_matrix(const KernelBlock& block, const BlockLayout& layout,
                                 const TensorGrid& targets, int dlog_dim) const;
    Eigen::VectorXd apply_term(const KernelTerm& term, std::size_t term_index,
                               const TensorGrid& targets, const Eigen::VectorXd& w,
                               int replaced_block, const Eigen::MatrixXd* replacement) const;

    KernelSpec spec_;
    std::vector<KernelTerm> terms_;
    std::vector<std::vector<BlockLayout>> layouts_;
    std::array<std::size_t, 3> counts_{};
    std::size_t m_{0};
};

/// K_{T,Z} K_ZZ^{-1} u at the block's targets.
Eigen::VectorXd conditional_projection(const SparseGPBlock& block, const Eigen::VectorXd& u);

struct MarginalPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

/// q(f) at the targets after integrating u out of p(f | u) q(u).
MarginalPosterior marginal_posterior(const SparseGPBlock& block);

/// K_TT - K_TZ K_ZZ^{-1} K_ZT, the part of the prior the inducing variables cannot explain.
Eigen::MatrixXd prior_residual(const SparseGPBlock& block);

/// u = mean + factor * draw, projected to the targets.
Eigen::VectorXd dtc_sample(const SparseGPBlock& block, const Eigen::VectorXd& standard_normal_draw);

}  // namespace nphawkes
