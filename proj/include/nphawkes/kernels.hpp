#pragma once

#include "nphawkes/geometry.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nphawkes {

enum class KernelFamily { RBF, Matern12, Matern32, Matern52 };
enum class KernelStructure { Separable, Additive };

/// Maps a Matern smoothness to its family. Only nu in {0.5, 1.5, 2.5} is supported.
KernelFamily matern_family(double nu);
double matern_nu(KernelFamily family);

std::string to_string(KernelFamily family);
std::string to_string(KernelStructure structure);
KernelStructure parse_structure(const std::string& name);

/// Signal variances and lengthscales.
///
/// Separable: variances = {s2}, lengthscales = {l_t, l_x, l_y} (ARD).
/// Additive:  variances = {s2_t, s2_s, s2_ts}, lengthscales = {l_t, l_s, l_ts}.
struct KernelHyperparams {
    std::vector<double> variances;
    std::vector<double> lengthscales;
};

class KernelSpec {
public:
    KernelSpec(KernelFamily family, KernelStructure structure, KernelHyperparams hyperparams);

    KernelFamily family() const noexcept { return family_; }
    KernelStructure structure() const noexcept { return structure_; }
    const KernelHyperparams& hyperparams() const noexcept { return hyperparams_; }

    static std::size_t variance_count(KernelStructure structure) noexcept;
    static std::size_t parameter_count(KernelStructure structure) noexcept;
    std::size_t parameter_count() const noexcept { return parameter_count(structure_); }

    /// Hyperparameters flattened as variances followed by lengthscales.
    std::vector<double> packed() const;
    static KernelSpec from_packed(KernelFamily family, KernelStructure structure,
                                  std::span<const double> packed);
    static KernelSpec from_log_packed(KernelFamily family, KernelStructure structure,
                                      std::span<const double> log_packed);
    std::vector<std::string> parameter_names() const;

private:
    KernelFamily family_;
    KernelStructure structure_;
    KernelHyperparams hyperparams_;
};

class ConditioningError : public std::runtime_error {
public:
    ConditioningError(const std::string& what, double condition_estimate)
        : std::runtime_error(what), condition_estimate_(condition_estimate) {}
    double condition_estimate() const noexcept { return condition_estimate_; }

private:
    double condition_estimate_;
};

/// Unit-variance stationary profile k(r) of a scaled distance r = d / l.
double unit_profile(KernelFamily family, double r) noexcept;

/// -k'(r)/r; gives d k / d log(l) = profile_slope(r) * r^2. Returns 0 for Matern-1/2 at r = 0.
double profile_slope(KernelFamily family, double r) noexcept;

double eval_base_kernel(KernelFamily family, double r, double variance, double lengthscale);

double eval_joint_kernel(const KernelSpec& spec, const Point3& p, const Point3& q);

/// Gradient of the joint kernel with respect to the log of every packed hyperparameter.
void joint_kernel_log_gradient(const KernelSpec& spec, const Point3& p, const Point3& q,
                               std::span<double> out);

/// Cross-covariance |a| x |b|. If `a` and `b` are the same list, `jitter` is added on the diagonal.
Eigen::MatrixXd gram_matrix(const KernelSpec& spec, std::span<const Point3> a,
                            std::span<const Point3> b, double jitter = 0.0);

/// Symmetric Gram matrix of a single point list plus jitter * I.
Eigen::MatrixXd gram_matrix(const KernelSpec& spec, std::span<const Point3> a, double jitter = 0.0);

/// Cholesky factor of K + j * I where j escalates from 1e-6 * mean(diag K) by factors of 10
/// up to 1e-2 * mean(diag K). Throws ConditioningError when every level fails.
struct StableCholesky {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter{0.0};
    /// The multiplier of mean(diag K) that succeeded.
    double relative_jitter{0.0};
};

StableCholesky stable_cholesky(const Eigen::MatrixXd& k);

/// lambda_max / lambda_min of a symmetric matrix, +infinity when lambda_min <= 0.
double condition_number(const Eigen::MatrixXd& m);

// ---------------------------------------------------------------------------
// Product decomposition.
//
// Every supported kernel is a sum of terms, each a variance times a product of
// factors over contiguous blocks of dimensions (t | x | y, or t | x,y, or t,x,y).
// RBF factors are split per dimension. This is what lets Gram products over
// tensor grids be evaluated as a sequence of small mode products.

struct KernelBlock {
    int dim_begin{0};
    int dim_end{0};
    /// Constant-one factor: the term does not depend on these dimensions.
    bool ones{false};
    std::array<double, 3> lengthscale{1.0, 1.0, 1.0};
    std::array<int, 3> lengthscale_param{-1, -1, -1};

    int width() const noexcept { return dim_end - dim_begin; }
};

struct KernelTerm {
    double variance{1.0};
    int variance_param{0};
    std::vector<KernelBlock> blocks;
};

std::vector<KernelTerm> decompose(const KernelSpec& spec);

/// Factor value for the block given the lags of its dimensions (delta[0..width)).
/// When `dlog` is non-null it receives d value / d log(l_d) per block dimension.
double block_factor(KernelFamily family, const KernelBlock& block, const double* delta,
                    double* dlog) noexcept;

}  // namespace nphawkes
