#include "nphawkes/sparse_gp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nphawkes {

namespace {

using Index = Eigen::Index;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Pivots smaller than this fraction of the mean diagonal mark a matrix as too close to
// singular to factorise without jitter.
constexpr double kPivotFloor = 1e-6;

// x has row-major shape (left, in, right); returns (left, out, right) with G (out x in) applied
// to the middle mode, or G^T when `transpose` is set.
Eigen::VectorXd mode_product(const Eigen::MatrixXd& g, const Eigen::VectorXd& x, Index left,
                             Index in, Index right, bool transpose) {
    const Index out_n = transpose ? g.cols() : g.rows();
    Eigen::VectorXd y(left * out_n * right);
    for (Index l = 0; l < left; ++l) {
        Eigen::Map<const RowMajorMatrix> xs(x.data() + l * in * right, in, right);
        Eigen::Map<RowMajorMatrix> ys(y.data() + l * out_n * right, out_n, right);
        if (transpose) {
            ys.noalias() = g.transpose() * xs;
        } else {
            ys.noalias() = g * xs;
        }
    }
    return y;
}

std::vector<Point3> sub_grid(const TensorGrid& grid, int d0, int d1) {
    std::vector<Point3> out;
    std::array<std::vector<double>, 3> axes;
    for (int d = 0; d < 3; ++d) {
        if (d >= d0 && d < d1) {
            axes[static_cast<std::size_t>(d)] = grid.axes[static_cast<std::size_t>(d)];
        } else {
            axes[static_cast<std::size_t>(d)] = {0.0};
        }
    }
    for (double t : axes[0])
        for (double x : axes[1])
            for (double y : axes[2]) out.push_back({t, x, y});
    return out;
}

}  // namespace

InducingGrid::InducingGrid(const Box& domain, std::array<std::size_t, 3> counts)
    : InducingGrid(TensorGrid::equidistant(domain, counts)) {}

InducingGrid::InducingGrid(TensorGrid grid) : grid_(std::move(grid)), points_(grid_.points()) {
    if (points_.empty()) throw std::invalid_argument("inducing grid must not be empty");
}

void InducingPosterior::validate() const {
    if (factor.rows() != mean.size() || factor.cols() != mean.size()) {
        throw std::invalid_argument("inducing posterior factor does not match the mean length");
    }
    for (Index i = 0; i < factor.rows(); ++i) {
        if (!(factor(i, i) > 0.0)) {
            throw std::invalid_argument("inducing posterior factor needs a positive diagonal");
        }
        for (Index j = i + 1; j < factor.cols(); ++j) {
            if (factor(i, j) != 0.0) {
                throw std::invalid_argument("inducing posterior factor must be lower triangular");
            }
        }
    }
}

InducingFactor factorize_inducing(const KernelSpec& spec, const InducingGrid& grid) {
    return factorize_gram(gram_matrix(spec, std::span<const Point3>(grid.points())));
}

InducingFactor factorize_gram(Eigen::MatrixXd gram) {
    InducingFactor out;
    out.gram = std::move(gram);
    const double mean_diag = out.gram.diagonal().mean();
    out.llt.compute(out.gram);
    if (out.llt.info() == Eigen::Success) {
        const Eigen::MatrixXd& l = out.llt.matrixLLT();
        const double min_pivot = l.diagonal().array().square().minCoeff();
        if (min_pivot >= kPivotFloor * mean_diag) return out;
    }
    StableCholesky sc = stable_cholesky(out.gram);
    out.llt = std::move(sc.llt);
    out.jitter = sc.jitter;
    out.relative_jitter = sc.relative_jitter;
    return out;
}

CrossCovariance::CrossCovariance(const KernelSpec& spec, const InducingGrid& grid)
    : spec_(spec), terms_(decompose(spec)), counts_(grid.counts()), m_(grid.size()) {
    const TensorGrid& tg = grid.tensor();
    layouts_.resize(terms_.size());
    for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
        for (const auto& block : terms_[ti].blocks) {
            BlockLayout layout;
            layout.inducing_nodes = sub_grid(tg, block.dim_begin, block.dim_end);
            layout.sub_index.resize(m_);
            for (std::size_t m = 0; m < m_; ++m) {
                const std::size_t a2 = m % counts_[2];
                const std::size_t a1 = (m / counts_[2]) % counts_[1];
                const std::size_t a0 = m / (counts_[2] * counts_[1]);
                const std::array<std::size_t, 3> a{a0, a1, a2};
                std::size_t sub = 0;
                for (int d = block.dim_begin; d < block.dim_end; ++d) {
                    sub = sub * counts_[static_cast<std::size_t>(d)] + a[static_cast<std::size_t>(d)];
                }
                layout.sub_index[m] = static_cast<int>(sub);
            }
            layouts_[ti].push_back(std::move(layout));
        }
    }
}

Eigen::MatrixXd CrossCovariance::rows(std::span<const Point3> targets) const {
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(static_cast<Index>(targets.size()),
                                              static_cast<Index>(m_));
    std::vector<std::vector<double>> values;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const Point3& p = targets[t];
        for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
            const auto& term = terms_[ti];
            const auto& layouts = layouts_[ti];
            values.resize(term.blocks.size());
            for (std::size_t b = 0; b < term.blocks.size(); ++b) {
                const auto& block = term.blocks[b];
                const auto& nodes = layouts[b].inducing_nodes;
                values[b].resize(nodes.size());
                for (std::size_t j = 0; j < nodes.size(); ++j) {
                    std::array<double, 3> delta{};
                    for (int d = block.dim_begin; d < block.dim_end; ++d) {
                        delta[static_cast<std::size_t>(d - block.dim_begin)] =
                            p[static_cast<std::size_t>(d)] - nodes[j][static_cast<std::size_t>(d)];
                    }
                    values[b][j] = block_factor(spec_.family(), block, delta.data(), nullptr);
                }
            }
            for (std::size_t m = 0; m < m_; ++m) {
                double prod = term.variance;
                for (std::size_t b = 0; b < term.blocks.size(); ++b) {
                    prod *= values[b][static_cast<std::size_t>(layouts[b].sub_index[m])];
                }
                k(static_cast<Index>(t), static_cast<Index>(m)) += prod;
            }
        }
    }
    return k;
}

template <typename Coeff>
void CrossCovariance::scattered_gradient_impl(std::span<const Point3> targets, Coeff&& coeff,
                                              std::span<double> grad) const {
    if (grad.size() != spec_.parameter_count()) {
        throw std::invalid_argument("gradient buffer has the wrong length");
    }
    std::vector<std::vector<double>> values;
    std::vector<std::vector<std::array<double, 3>>> dlogs;
    std::vector<double> coeff_row(m_);
    for (std::size_t t = 0; t < targets.size(); ++t) {
        bool any = false;
        for (std::size_t m = 0; m < m_; ++m) {
            coeff_row[m] = coeff(t, m);
            any = any || coeff_row[m] != 0.0;
        }
        if (!any) continue;
        const Point3& p = targets[t];
        for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
            const auto& term = terms_[ti];
            const auto& layouts = layouts_[ti];
            const std::size_t nb = term.blocks.size();
            values.resize(nb);
            dlogs.resize(nb);
            for (std::size_t b = 0; b < nb; ++b) {
                const auto& block = term.blocks[b];
                const auto& nodes = layouts[b].inducing_nodes;
                values[b].resize(nodes.size());
                dlogs[b].resize(nodes.size());
                for (std::size_t j = 0; j < nodes.size(); ++j) {
                    std::array<double, 3> delta{};
                    for (int d = block.dim_begin; d < block.dim_end; ++d) {
                        delta[static_cast<std::size_t>(d - block.dim_begin)] =
                            p[static_cast<std::size_t>(d)] - nodes[j][static_cast<std::size_t>(d)];
                    }
                    values[b][j] =
                        block_factor(spec_.family(), block, delta.data(), dlogs[b][j].data());
                }
            }
            double var_acc = 0.0;
            std::array<double, 3> v{};
            for (std::size_t m = 0; m < m_; ++m) {
                const double c = coeff_row[m];
                if (c == 0.0) continue;
                double all = 1.0;
                for (std::size_t b = 0; b < nb; ++b) {
                    v[b] = values[b][static_cast<std::size_t>(layouts[b].sub_index[m])];
                    all *= v[b];
                }
                var_acc += c * all;
                for (std::size_t b = 0; b < nb; ++b) {
                    const auto& block = term.blocks[b];
                    if (block.ones) continue;
                    double others = 1.0;
                    for (std::size_t o = 0; o < nb; ++o) {
                        if (o != b) others *= v[o];
                    }
                    const auto& dl = dlogs[b][static_cast<std::size_t>(layouts[b].sub_index[m])];
                    for (int k = 0; k < block.width(); ++k) {
                        grad[static_cast<std::size_t>(block.lengthscale_param[static_cast<std::size_t>(k)])] +=
                            c * term.variance * others * dl[static_cast<std::size_t>(k)];
                    }
                }
            }
            grad[static_cast<std::size_t>(term.variance_param)] += term.variance * var_acc;
        }
    }
}

void CrossCovariance::accumulate_scattered_gradient(std::span<const Point3> targets,
                                                    const Eigen::VectorXd& g,
                                                    const Eigen::VectorXd& w,
                                                    std::span<double> grad) const {
    if (static_cast<std::size_t>(g.size()) != targets.size() ||
        static_cast<std::size_t>(w.size()) != m_) {
        throw std::invalid_argument("scattered gradient: dimension mismatch");
    }
    scattered_gradient_impl(
        targets,
        [&](std::size_t t, std::size_t m) {
            return g[static_cast<Index>(t)] * w[static_cast<Index>(m)];
        },
        grad);
}

void CrossCovariance::accumulate_scattered_gradient(std::span<const Point3> targets,
                                                    const Eigen::MatrixXd& coeff,
                                                    std::span<double> grad) const {
    if (static_cast<std::size_t>(coeff.rows()) != targets.size() ||
        static_cast<std::size_t>(coeff.cols()) != m_) {
        throw std::invalid_argument("scattered gradient: coefficient matrix has the wrong shape");
    }
    scattered_gradient_impl(
        targets,
        [&](std::size_t t, std::size_t m) {
            return coeff(static_cast<Index>(t), static_cast<Index>(m));
        },
        grad);
}

namespace {

// Row-wise Kronecker product of the given (n x s_i) matrices; a single column of ones if empty.
Eigen::MatrixXd row_kron(const std::vector<const Eigen::MatrixXd*>& mats, Index n) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Ones(n, 1);
    for (const Eigen::MatrixXd* m : mats) {
        Eigen::MatrixXd next(n, out.cols() * m->cols());
        for (Index a = 0; a < out.cols(); ++a) {
            for (Index b = 0; b < m->cols(); ++b) {
                next.col(a * m->cols() + b) = out.col(a).cwiseProduct(m->col(b));
            }
        }
        out = std::move(next);
    }
    return out;
}

// Vectorised unit profile (and slope, see profile_slope) from squared scaled distances.
void profile_columns(KernelFamily family, const Eigen::ArrayXd& r2, Eigen::ArrayXd& value,
                     Eigen::ArrayXd* slope) {
    constexpr double sqrt3 = 1.7320508075688772;
    constexpr double sqrt5 = 2.23606797749979;
    switch (family) {
        case KernelFamily::RBF:
            value = (-0.5 * r2).exp();
            if (slope) *slope = value;
            return;
        case KernelFamily::Matern12: {
            const Eigen::ArrayXd r = r2.sqrt();
            value = (-r).exp();
            if (slope) *slope = (r > 0.0).select(value / r, 0.0);
            return;
        }
        case KernelFamily::Matern32: {
            const Eigen::ArrayXd r = r2.sqrt();
            const Eigen::ArrayXd e = (-sqrt3 * r).exp();
            value = (1.0 + sqrt3 * r) * e;
            if (slope) *slope = 3.0 * e;
            return;
        }
        case KernelFamily::Matern52: {
            const Eigen::ArrayXd r = r2.sqrt();
            const Eigen::ArrayXd e = (-sqrt5 * r).exp();
            value = (1.0 + sqrt5 * r + (5.0 / 3.0) * r2) * e;
            if (slope) *slope = (5.0 / 3.0) * (1.0 + sqrt5 * r) * e;
            return;
        }
    }
}

std::vector<const Eigen::MatrixXd*> rest_values(const std::vector<ScatteredBasis::Block>& blocks,
                                                std::size_t replaced, const Eigen::MatrixXd* with) {
    std::vector<const Eigen::MatrixXd*> out;
    for (std::size_t b = 1; b < blocks.size(); ++b) out.push_back(b == replaced ? with : &blocks[b].values);
    return out;
}

}  // namespace

ScatteredBasis CrossCovariance::scattered_basis(std::span<const Point3> targets,
                                                bool with_derivatives) const {
    ScatteredBasis basis;
    basis.n = targets.size();
    const auto n = static_cast<Index>(targets.size());
    basis.terms.resize(terms_.size());
    for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
        const auto& term = terms_[ti];
        for (std::size_t b = 0; b < term.blocks.size(); ++b) {
            const auto& block = term.blocks[b];
            const auto& nodes = layouts_[ti][b].inducing_nodes;
            const auto s = static_cast<Index>(nodes.size());
            ScatteredBasis::Block out;
            if (block.ones) {
                out.values = Eigen::MatrixXd::Ones(n, s);
                basis.terms[ti].push_back(std::move(out));
                continue;
            }
            out.values.resize(n, s);
            std::vector<int> params;
            if (with_derivatives) {
                for (int k = 0; k < block.width(); ++k) {
                    const int p = block.lengthscale_param[static_cast<std::size_t>(k)];
                    if (std::find(params.begin(), params.end(), p) == params.end()) params.push_back(p);
                }
                for (int p : params) out.derivatives.emplace_back(p, Eigen::MatrixXd(n, s));
            }
            const int w = block.width();
            std::array<Eigen::ArrayXd, 3> coords;
            for (int k = 0; k < w; ++k) {
                const auto d = static_cast<std::size_t>(block.dim_begin + k);
                coords[static_cast<std::size_t>(k)].resize(n);
                for (Index t = 0; t < n; ++t) coords[static_cast<std::size_t>(k)][t] = targets[static_cast<std::size_t>(t)][d];
            }
            std::array<Eigen::ArrayXd, 3> s2;
            Eigen::ArrayXd r2(n), value(n), slope(n);
            for (Index j = 0; j < s; ++j) {
                const Point3& z = nodes[static_cast<std::size_t>(j)];
                r2.setZero();
                for (int k = 0; k < w; ++k) {
                    const auto kk = static_cast<std::size_t>(k);
                    const double zk = z[static_cast<std::size_t>(block.dim_begin + k)];
                    s2[kk] = ((coords[kk] - zk) / block.lengthscale[kk]).square();
                    r2 += s2[kk];
                }
                profile_columns(spec_.family(), r2, value, with_derivatives ? &slope : nullptr);
                out.values.col(j) = value.matrix();
                for (auto& [p, mat] : out.derivatives) {
                    Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(n);
                    for (int k = 0; k < w; ++k) {
                        if (block.lengthscale_param[static_cast<std::size_t>(k)] == p) acc += s2[static_cast<std::size_t>(k)];
                    }
                    mat.col(j) = (slope * acc).matrix();
                }
            }
            basis.terms[ti].push_back(std::move(out));
        }
    }
    return basis;
}

Eigen::VectorXd CrossCovariance::apply_scattered(const ScatteredBasis& basis,
                                                 const Eigen::VectorXd& w) const {
    if (static_cast<std::size_t>(w.size()) != m_) throw std::invalid_argument("apply_scattered: bad length");
    const auto n = static_cast<Index>(basis.n);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
        const auto& blocks = basis.terms[ti];
        const Eigen::MatrixXd kr = row_kron(rest_values(blocks, 0, nullptr), n);
        const Eigen::Map<const RowMajorMatrix> wm(w.data(), blocks[0].values.cols(), kr.cols());
        out += terms_[ti].variance * ((blocks[0].values * wm).cwiseProduct(kr)).rowwise().sum();
    }
    return out;
}

Eigen::VectorXd CrossCovariance::apply_scattered_transpose(const ScatteredBasis& basis,
                                                           const Eigen::VectorXd& g) const {
    const auto n = static_cast<Index>(basis.n);
    if (g.size() != n) throw std::invalid_argument("apply_scattered_transpose: bad length");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Index>(m_));
    for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
        const auto& blocks = basis.terms[ti];
        const Eigen::MatrixXd kr = row_kron(rest_values(blocks, 0, nullptr), n);
        const RowMajorMatrix acc = blocks[0].values.transpose() * (g.asDiagonal() * kr);
        out += terms_[ti].variance * Eigen::Map<const Eigen::VectorXd>(acc.data(), acc.size());
    }
    return out;
}

void CrossCovariance::accumulate_scattered_gradient(const ScatteredBasis& basis, const Eigen::VectorXd& g,
                                                    const Eigen::VectorXd& w,
                                                    std::span<double> grad) const {
    const auto n = static_cast<Index>(basis.n);
    if (g.size() != n || static_cast<std::size_t>(w.size()) != m_ ||
        grad.size() != spec_.parameter_count()) {
        throw std::invalid_argument("scattered gradient: dimension mismatch");
    }
    for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
        const auto& term = terms_[ti];
        const auto& blocks = basis.terms[ti];
        const Eigen::MatrixXd kr = row_kron(rest_values(blocks, 0, nullptr), n);
        const Eigen::Map<const RowMajorMatrix> wm(w.data(), blocks[0].values.cols(), kr.cols());
        const Eigen::MatrixXd head = blocks[0].values * wm;
        grad[static_cast<std::size_t>(term.variance_param)] +=
            term.variance * g.dot(head.cwiseProduct(kr).rowwise().sum());
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            for (const auto& [p, d] : blocks[b].derivatives) {
                double v = 0.0;
                if (b == 0) {
                    v = g.dot((d * wm).cwiseProduct(kr).rowwise().sum());
                } else {
                    const Eigen::MatrixXd krd = row_kron(rest_values(blocks, b, &d), n);
                    v = g.dot(head.cwiseProduct(krd).rowwise().sum());
                }
                grad[static_cast<std::size_t>(p)] += term.variance * v;
            }
        }
    }
}

Eigen::MatrixXd CrossCovariance::block_matrix(const KernelBlock& block, const BlockLayout& layout,
                                              const TensorGrid& targets, int dlog_dim) const {
    const std::vector<Point3> target_nodes = sub_grid(targets, block.dim_begin, block.dim_end);
    const auto& nodes = layout.inducing_nodes;
    Eigen::MatrixXd g(static_cast<Index>(target_nodes.size()), static_cast<Index>(nodes.size()));
    std::array<double, 3> dlog{};
    for (std::size_t i = 0; i < target_nodes.size(); ++i) {
        for (std::size_t j = 0; j < nodes.size(); ++j) {
            std::array<double, 3> delta{};
            for (int d = block.dim_begin; d < block.dim_end; ++d) {
                delta[static_cast<std::size_t>(d - block.dim_begin)] =
                    target_nodes[i][static_cast<std::size_t>(d)] -
                    nodes[j][static_cast<std::size_t>(d)];
            }
            const double v = block_factor(spec_.family(), block, delta.data(), dlog.data());
            double entry = v;
            if (dlog_dim >= 0) {
                // Sum the derivative over every block dimension sharing the parameter.
                const int param = block.lengthscale_param[static_cast<std::size_t>(dlog_dim)];
                entry = 0.0;
                for (int k = 0; k < block.width(); ++k) {
                    if (block.lengthscale_param[static_cast<std::size_t>(k)] == param) {
                        entry += dlog[static_cast<std::size_t>(k)];
                    }
                }
            }
            g(static_cast<Index>(i), static_cast<Index>(j)) = entry;
        }
    }
    return g;
}

Eigen::VectorXd CrossCovariance::apply_term(const KernelTerm& term, std::size_t term_index,
                                            const TensorGrid& targets, const Eigen::VectorXd& w,
                                            int replaced_block,
                                            const Eigen::MatrixXd* replacement) const {
    std::array<Index, 3> cur{static_cast<Index>(counts_[0]), static_cast<Index>(counts_[1]),
                             static_cast<Index>(counts_[2])};
    const auto tc = targets.counts();
    Eigen::VectorXd x = w;
    for (std::size_t b = 0; b < term.blocks.size(); ++b) {
        const auto& block = term.blocks[b];
        Index left = 1, in = 1, right = 1;
        for (int d = 0; d < 3; ++d) {
            const auto ud = static_cast<std::size_t>(d);
            if (d < block.dim_begin) left *= cur[ud];
            else if (d < block.dim_end) in *= cur[ud];
            else right *= cur[ud];
        }
        if (static_cast<int>(b) == replaced_block) {
            x = mode_product(*replacement, x, left, in, right, false);
        } else {
            x = mode_product(block_matrix(block, layouts_[term_index][b], targets, -1), x, left,
                             in, right, false);
        }
        for (int d = block.dim_begin; d < block.dim_end; ++d) {
            cur[static_cast<std::size_t>(d)] = static_cast<Index>(tc[static_cast<std::size_t>(d)]);
        }
    }
    return term.variance * x;
}

Eigen::VectorXd CrossCovariance::apply_grid(const TensorGrid& targets,
                                            const Eigen::VectorXd& w) const {
    if (static_cast<std::size_t>(w.size()) != m_) {
        throw std::invalid_argument("apply_grid: weight vector has the wrong length");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Index>(targets.size()));
    for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
        out += apply_term(terms_[ti], ti, targets, w, -1, nullptr);
    }
    return out;
}

Eigen::VectorXd CrossCovariance::apply_grid_transpose(const TensorGrid& targets,
                                                      const Eigen::VectorXd& g) const {
    if (static_cast<std::size_t>(g.size()) != targets.size()) {
        throw std::invalid_argument("apply_grid_transpose: vector has the wrong length");
    }
    const auto tc = targets.counts();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Index>(m_));
    for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
        const auto& term = terms_[ti];
        std::array<Index, 3> cur{static_cast<Index>(tc[0]), static_cast<Index>(tc[1]),
                                 static_cast<Index>(tc[2])};
        Eigen::VectorXd x = g;
        for (std::size_t b = 0; b < term.blocks.size(); ++b) {
            const auto& block = term.blocks[b];
            Index left = 1, in = 1, right = 1;
            for (int d = 0; d < 3; ++d) {
                const auto ud = static_cast<std::size_t>(d);
                if (d < block.dim_begin) left *= cur[ud];
                else if (d < block.dim_end) in *= cur[ud];
                else right *= cur[ud];
            }
            x = mode_product(block_matrix(block, layouts_[ti][b], targets, -1), x, left, in,
                             right, true);
            for (int d = block.dim_begin; d < block.dim_end; ++d) {
                cur[static_cast<std::size_t>(d)] = static_cast<Index>(counts_[static_cast<std::size_t>(d)]);
            }
        }
        out += term.variance * x;
    }
    return out;
}

void CrossCovariance::accumulate_grid_gradient(const TensorGrid& targets, const Eigen::VectorXd& g,
                                               const Eigen::VectorXd& w,
                                               std::span<double> grad) const {
    if (grad.size() != spec_.parameter_count()) {
        throw std::invalid_argument("gradient buffer has the wrong length");
    }
    if (static_cast<std::size_t>(g.size()) != targets.size() ||
        static_cast<std::size_t>(w.size()) != m_) {
        throw std::invalid_argument("grid gradient: dimension mismatch");
    }
    for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
        const auto& term = terms_[ti];
        grad[static_cast<std::size_t>(term.variance_param)] +=
            g.dot(apply_term(term, ti, targets, w, -1, nullptr));
        for (std::size_t b = 0; b < term.blocks.size(); ++b) {
            const auto& block = term.blocks[b];
            if (block.ones) continue;
            std::vector<int> seen;
            for (int k = 0; k < block.width(); ++k) {
                const int param = block.lengthscale_param[static_cast<std::size_t>(k)];
                if (std::find(seen.begin(), seen.end(), param) != seen.end()) continue;
                seen.push_back(param);
                const Eigen::MatrixXd dg = block_matrix(block, layouts_[ti][b], targets, k);
                grad[static_cast<std::size_t>(param)] +=
                    g.dot(apply_term(term, ti, targets, w, static_cast<int>(b), &dg));
            }
        }
    }
}

Eigen::VectorXd conditional_projection(const SparseGPBlock& block, const Eigen::VectorXd& u) {
    if (static_cast<std::size_t>(u.size()) != block.grid.size()) {
        throw std::invalid_argument("inducing vector length does not match the grid");
    }
    const InducingFactor f = factorize_inducing(block.kernel, block.grid);
    const Eigen::MatrixXd ktz = gram_matrix(block.kernel, std::span<const Point3>(block.targets),
                                            std::span<const Point3>(block.grid.points()));
    return ktz * f.solve(u);
}

namespace {

struct Projection {
    Eigen::MatrixXd a;    // K_TZ K_ZZ^{-1}
    Eigen::MatrixXd ktz;  // K_TZ
};

Projection projection_matrix(const SparseGPBlock& block) {
    const InducingFactor f = factorize_inducing(block.kernel, block.grid);
    Projection p;
    p.ktz = gram_matrix(block.kernel, std::span<const Point3>(block.targets),
                        std::span<const Point3>(block.grid.points()));
    p.a = f.llt.solve(p.ktz.transpose()).transpose();
    return p;
}

}  // namespace

MarginalPosterior marginal_posterior(const SparseGPBlock& block) {
    block.posterior.validate();
    if (static_cast<std::size_t>(block.posterior.mean.size()) != block.grid.size()) {
        throw std::invalid_argument("posterior mean length does not match the grid");
    }
    const Projection p = projection_matrix(block);
    const Eigen::MatrixXd ktt = gram_matrix(block.kernel, std::span<const Point3>(block.targets));
    const Eigen::MatrixXd as = p.a * block.posterior.factor;
    MarginalPosterior out;
    out.mean = p.a * block.posterior.mean;
    out.covariance = ktt - p.a * p.ktz.transpose() + as * as.transpose();
    return out;
}

Eigen::MatrixXd prior_residual(const SparseGPBlock& block) {
    const Projection p = projection_matrix(block);
    const Eigen::MatrixXd ktt = gram_matrix(block.kernel, std::span<const Point3>(block.targets));
    return ktt - p.a * p.ktz.transpose();
}

Eigen::VectorXd dtc_sample(const SparseGPBlock& block, const Eigen::VectorXd& standard_normal_draw) {
    block.posterior.validate();
    if (standard_normal_draw.size() != block.posterior.mean.size()) {
        throw std::invalid_argument("draw length does not match the inducing posterior");
    }
    const Eigen::VectorXd u =
        block.posterior.mean + block.posterior.factor * standard_normal_draw;
    return conditional_projection(block, u);
}

}  // namespace nphawkes
