#include "nphawkes/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <sstream>

namespace nphawkes {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kSqrt5 = 2.23606797749979;

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        std::ostringstream os;
        os << what << " must be finite and strictly positive (got " << v << ")";
        throw std::domain_error(os.str());
    }
}

}  // namespace

KernelFamily matern_family(double nu) {
    if (nu == 0.5) return KernelFamily::Matern12;
    if (nu == 1.5) return KernelFamily::Matern32;
    if (nu == 2.5) return KernelFamily::Matern52;
    std::ostringstream os;
    os << "Matern smoothness nu must be one of 0.5, 1.5, 2.5 (got " << nu << ")";
    throw std::invalid_argument(os.str());
}

double matern_nu(KernelFamily family) {
    switch (family) {
        case KernelFamily::Matern12: return 0.5;
        case KernelFamily::Matern32: return 1.5;
        case KernelFamily::Matern52: return 2.5;
        case KernelFamily::RBF: break;
    }
    throw std::invalid_argument("RBF kernel has no Matern smoothness");
}

std::string to_string(KernelFamily family) {
    return family == KernelFamily::RBF ? "rbf" : "matern";
}

std::string to_string(KernelStructure structure) {
    return structure == KernelStructure::Separable ? "separable" : "additive";
}

KernelStructure parse_structure(const std::string& name) {
    if (name == "separable") return KernelStructure::Separable;
    if (name == "additive") return KernelStructure::Additive;
    throw std::invalid_argument("unknown kernel structure '" + name + "'");
}

KernelSpec::KernelSpec(KernelFamily family, KernelStructure structure,
                       KernelHyperparams hyperparams)
    : family_(family), structure_(structure), hyperparams_(std::move(hyperparams)) {
    const std::size_t nv = variance_count(structure);
    if (hyperparams_.variances.size() != nv || hyperparams_.lengthscales.size() != 3) {
        throw std::invalid_argument(
            "kernel hyperparameter count does not match structure '" + to_string(structure) + "'");
    }
    for (double v : hyperparams_.variances) require_positive(v, "signal variance");
    for (double l : hyperparams_.lengthscales) require_positive(l, "lengthscale");
}

std::size_t KernelSpec::variance_count(KernelStructure structure) noexcept {
    return structure == KernelStructure::Separable ? 1 : 3;
}

std::size_t KernelSpec::parameter_count(KernelStructure structure) noexcept {
    return variance_count(structure) + 3;
}

std::vector<double> KernelSpec::packed() const {
    std::vector<double> out = hyperparams_.variances;
    out.insert(out.end(), hyperparams_.lengthscales.begin(), hyperparams_.lengthscales.end());
    return out;
}

KernelSpec KernelSpec::from_packed(KernelFamily family, KernelStructure structure,
                                   std::span<const double> packed) {
    const std::size_t nv = variance_count(structure);
    if (packed.size() != nv + 3) {
        throw std::invalid_argument("packed hyperparameter vector has the wrong length");
    }
    KernelHyperparams hp;
    hp.variances.assign(packed.begin(), packed.begin() + static_cast<std::ptrdiff_t>(nv));
    hp.lengthscales.assign(packed.begin() + static_cast<std::ptrdiff_t>(nv), packed.end());
    return KernelSpec(family, structure, std::move(hp));
}

KernelSpec KernelSpec::from_log_packed(KernelFamily family, KernelStructure structure,
                                       std::span<const double> log_packed) {
    std::vector<double> packed(log_packed.size());
    for (std::size_t i = 0; i < packed.size(); ++i) packed[i] = std::exp(log_packed[i]);
    return from_packed(family, structure, packed);
}

std::vector<std::string> KernelSpec::parameter_names() const {
    if (structure_ == KernelStructure::Separable) {
        return {"variance", "lengthscale_t", "lengthscale_x", "lengthscale_y"};
    }
    return {"variance_t", "variance_s", "variance_ts",
            "lengthscale_t", "lengthscale_s", "lengthscale_ts"};
}

double unit_profile(KernelFamily family, double r) noexcept {
    switch (family) {
        case KernelFamily::RBF: return std::exp(-0.5 * r * r);
        case KernelFamily::Matern12: return std::exp(-r);
        case KernelFamily::Matern32: return (1.0 + kSqrt3 * r) * std::exp(-kSqrt3 * r);
        case KernelFamily::Matern52:
            return (1.0 + kSqrt5 * r + 5.0 * r * r / 3.0) * std::exp(-kSqrt5 * r);
    }
    return 0.0;
}

double profile_slope(KernelFamily family, double r) noexcept {
    switch (family) {
        case KernelFamily::RBF: return std::exp(-0.5 * r * r);
        case KernelFamily::Matern12: return r > 0.0 ? std::exp(-r) / r : 0.0;
        case KernelFamily::Matern32: return 3.0 * std::exp(-kSqrt3 * r);
        case KernelFamily::Matern52:
            return (5.0 / 3.0) * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
    }
    return 0.0;
}

namespace {

// Profile value and slope sharing one exponential.
double profile_and_slope(KernelFamily family, double r, double& slope) noexcept {
    switch (family) {
        case KernelFamily::RBF: {
            const double e = std::exp(-0.5 * r * r);
            slope = e;
            return e;
        }
        case KernelFamily::Matern12: {
            const double e = std::exp(-r);
            slope = r > 0.0 ? e / r : 0.0;
            return e;
        }
        case KernelFamily::Matern32: {
            const double e = std::exp(-kSqrt3 * r);
            slope = 3.0 * e;
            return (1.0 + kSqrt3 * r) * e;
        }
        case KernelFamily::Matern52: {
            const double e = std::exp(-kSqrt5 * r);
            slope = (5.0 / 3.0) * (1.0 + kSqrt5 * r) * e;
            return (1.0 + kSqrt5 * r + 5.0 * r * r / 3.0) * e;
        }
    }
    slope = 0.0;
    return 0.0;
}

}  // namespace

double eval_base_kernel(KernelFamily family, double r, double variance, double lengthscale) {
    require_positive(variance, "signal variance");
    require_positive(lengthscale, "lengthscale");
    if (!(r >= 0.0)) throw std::domain_error("kernel distance must be non-negative");
    return variance * unit_profile(family, r / lengthscale);
}

double eval_joint_kernel(const KernelSpec& spec, const Point3& p, const Point3& q) {
    const auto& hp = spec.hyperparams();
    const Point3 d = p - q;
    if (spec.structure() == KernelStructure::Separable) {
        const double lt = hp.lengthscales[0], lx = hp.lengthscales[1], ly = hp.lengthscales[2];
        const double kt = unit_profile(spec.family(), std::abs(d.t) / lt);
        const double sx = d.x / lx, sy = d.y / ly;
        const double ks = unit_profile(spec.family(), std::sqrt(sx * sx + sy * sy));
        return hp.variances[0] * kt * ks;
    }
    const double kt = eval_base_kernel(spec.family(), std::abs(d.t), hp.variances[0],
                                       hp.lengthscales[0]);
    const double ks = eval_base_kernel(spec.family(), std::hypot(d.x, d.y), hp.variances[1],
                                       hp.lengthscales[1]);
    const double kts = eval_base_kernel(spec.family(),
                                        std::sqrt(d.t * d.t + d.x * d.x + d.y * d.y),
                                        hp.variances[2], hp.lengthscales[2]);
    return kt + ks + kts;
}

std::vector<KernelTerm> decompose(const KernelSpec& spec) {
    const auto& hp = spec.hyperparams();
    const bool rbf = spec.family() == KernelFamily::RBF;
    auto single = [](int d, double l, int param) {
        KernelBlock b;
        b.dim_begin = d;
        b.dim_end = d + 1;
        b.lengthscale[0] = l;
        b.lengthscale_param[0] = param;
        return b;
    };
    auto ones = [](int d) {
        KernelBlock b;
        b.dim_begin = d;
        b.dim_end = d + 1;
        b.ones = true;
        return b;
    };
    auto multi = [](int begin, int end, std::array<double, 3> l, std::array<int, 3> param) {
        KernelBlock b;
        b.dim_begin = begin;
        b.dim_end = end;
        b.lengthscale = l;
        b.lengthscale_param = param;
        return b;
    };

    std::vector<KernelTerm> terms;
    if (spec.structure() == KernelStructure::Separable) {
        // packed: [s2, l_t, l_x, l_y]
        KernelTerm term{hp.variances[0], 0, {}};
        term.blocks.push_back(single(0, hp.lengthscales[0], 1));
        if (rbf) {
            term.blocks.push_back(single(1, hp.lengthscales[1], 2));
            term.blocks.push_back(single(2, hp.lengthscales[2], 3));
        } else {
            term.blocks.push_back(
                multi(1, 3, {hp.lengthscales[1], hp.lengthscales[2], 1.0}, {2, 3, -1}));
        }
        terms.push_back(std::move(term));
        return terms;
    }

    // packed: [s2_t, s2_s, s2_ts, l_t, l_s, l_ts]
    const double lt = hp.lengthscales[0], ls = hp.lengthscales[1], lts = hp.lengthscales[2];
    KernelTerm temporal{hp.variances[0], 0, {single(0, lt, 3), ones(1), ones(2)}};
    KernelTerm spatial{hp.variances[1], 1, {ones(0)}};
    KernelTerm joint{hp.variances[2], 2, {}};
    if (rbf) {
        spatial.blocks.push_back(single(1, ls, 4));
        spatial.blocks.push_back(single(2, ls, 4));
        joint.blocks = {single(0, lts, 5), single(1, lts, 5), single(2, lts, 5)};
    } else {
        spatial.blocks.push_back(multi(1, 3, {ls, ls, 1.0}, {4, 4, -1}));
        joint.blocks.push_back(multi(0, 3, {lts, lts, lts}, {5, 5, 5}));
    }
    terms.push_back(std::move(temporal));
    terms.push_back(std::move(spatial));
    terms.push_back(std::move(joint));
    return terms;
}

double block_factor(KernelFamily family, const KernelBlock& block, const double* delta,
                    double* dlog) noexcept {
    const int w = block.width();
    if (block.ones) {
        if (dlog) {
            for (int k = 0; k < w; ++k) dlog[k] = 0.0;
        }
        return 1.0;
    }
    std::array<double, 3> s2{};
    double r2 = 0.0;
    for (int k = 0; k < w; ++k) {
        const double s = delta[k] / block.lengthscale[k];
        s2[k] = s * s;
        r2 += s2[k];
    }
    const double r = std::sqrt(r2);
    if (!dlog) return unit_profile(family, r);
    double slope = 0.0;
    const double value = profile_and_slope(family, r, slope);
    for (int k = 0; k < w; ++k) dlog[k] = slope * s2[k];
    return value;
}

void joint_kernel_log_gradient(const KernelSpec& spec, const Point3& p, const Point3& q,
                               std::span<double> out) {
    if (out.size() != spec.parameter_count()) {
        throw std::invalid_argument("gradient buffer has the wrong length");
    }
    std::fill(out.begin(), out.end(), 0.0);
    const Point3 d = p - q;
    const std::array<double, 3> delta{d.t, d.x, d.y};
    for (const auto& term : decompose(spec)) {
        std::vector<double> values(term.blocks.size());
        std::vector<std::array<double, 3>> dlogs(term.blocks.size());
        double product = 1.0;
        for (std::size_t b = 0; b < term.blocks.size(); ++b) {
            const auto& block = term.blocks[b];
            values[b] = block_factor(spec.family(), block, &delta[block.dim_begin], dlogs[b].data());
            product *= values[b];
        }
        out[term.variance_param] += term.variance * product;
        for (std::size_t b = 0; b < term.blocks.size(); ++b) {
            const auto& block = term.blocks[b];
            if (block.ones) continue;
            double others = term.variance;
            for (std::size_t c = 0; c < term.blocks.size(); ++c) {
                if (c != b) others *= values[c];
            }
            for (int k = 0; k < block.width(); ++k) {
                out[block.lengthscale_param[k]] += others * dlogs[b][k];
            }
        }
    }
}

Eigen::MatrixXd gram_matrix(const KernelSpec& spec, std::span<const Point3> a,
                            std::span<const Point3> b, double jitter) {
    const bool same = a.data() == b.data() && a.size() == b.size();
    if (same) return gram_matrix(spec, a, jitter);
    Eigen::MatrixXd k(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                eval_joint_kernel(spec, a[i], b[j]);
        }
    }
    return k;
}

Eigen::MatrixXd gram_matrix(const KernelSpec& spec, std::span<const Point3> a, double jitter) {
    if (jitter < 0.0) throw std::domain_error("jitter must be non-negative");
    const auto n = static_cast<Eigen::Index>(a.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = eval_joint_kernel(spec, a[i], a[j]);
            k(i, j) = v;
            k(j, i) = v;
        }
        k(i, i) += jitter;
    }
    return k;
}

StableCholesky stable_cholesky(const Eigen::MatrixXd& k) {
    if (k.rows() != k.cols()) throw std::invalid_argument("Cholesky of a non-square matrix");
    const double mean_diag = k.rows() > 0 ? k.diagonal().mean() : 1.0;
    StableCholesky out;
    for (double rel = 1e-6; rel <= 1e-2 * 1.0000001; rel *= 10.0) {
        const double j = rel * mean_diag;
        Eigen::MatrixXd kj = k;
        kj.diagonal().array() += j;
        out.llt.compute(kj);
        if (out.llt.info() == Eigen::Success) {
            out.jitter = j;
            out.relative_jitter = rel;
            return out;
        }
    }
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += 1e-2 * mean_diag;
    const double kappa = condition_number(kj);
    std::ostringstream os;
    os << "Cholesky factorisation failed after jitter escalation (condition estimate " << kappa
       << ")";
    throw ConditioningError(os.str(), kappa);
}

double condition_number(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw std::invalid_argument("condition number requires a non-empty square matrix");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

}  // namespace nphawkes
