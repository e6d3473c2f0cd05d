#include <doctest.h>

#include "nphawkes/kernels.hpp"

#include <cmath>
#include <random>

using namespace nphawkes;

namespace {

KernelSpec separable(KernelFamily f, double s2, double lt, double lx, double ly) {
    return KernelSpec(f, KernelStructure::Separable, {{s2}, {lt, lx, ly}});
}

KernelSpec additive(KernelFamily f, double st, double ss, double sts, double lt, double ls, double lts) {
    return KernelSpec(f, KernelStructure::Additive, {{st, ss, sts}, {lt, ls, lts}});
}

std::vector<Point3> random_points(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::vector<Point3> pts(n);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    return pts;
}

double matern_oracle(KernelFamily f, double r) {
    switch (f) {
        case KernelFamily::Matern12: return std::exp(-r);
        case KernelFamily::Matern32: return (1 + std::sqrt(3.0) * r) * std::exp(-std::sqrt(3.0) * r);
        case KernelFamily::Matern52:
            return (1 + std::sqrt(5.0) * r + 5.0 * r * r / 3.0) * std::exp(-std::sqrt(5.0) * r);
        default: return std::exp(-0.5 * r * r);
    }
}

const KernelFamily kFamilies[] = {KernelFamily::RBF, KernelFamily::Matern12, KernelFamily::Matern32,
                                  KernelFamily::Matern52};

}  // namespace

TEST_CASE("base kernel values") {
    CHECK(eval_base_kernel(KernelFamily::RBF, 0.0, 2.5, 1.0) == doctest::Approx(2.5));
    CHECK(eval_base_kernel(KernelFamily::RBF, 1.0, 1.0, 1.0) == doctest::Approx(std::exp(-0.5)));
    CHECK(eval_base_kernel(KernelFamily::Matern12, 1.0, 1.0, 1.0) == doctest::Approx(0.36788).epsilon(1e-5));
    CHECK(eval_base_kernel(KernelFamily::Matern52, 0.0, 3.0, 0.4) == doctest::Approx(3.0));
    for (auto f : kFamilies) {
        for (double r : {0.1, 0.7, 2.3}) {
            CHECK(eval_base_kernel(f, r, 1.7, 0.6) == doctest::Approx(1.7 * matern_oracle(f, r / 0.6)));
        }
    }
}

TEST_CASE("base kernel rejects non-positive hyperparameters") {
    CHECK_THROWS_AS(eval_base_kernel(KernelFamily::RBF, 0.5, 0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(eval_base_kernel(KernelFamily::RBF, 0.5, 1.0, -1.0), std::domain_error);
    CHECK_THROWS_AS(eval_base_kernel(KernelFamily::Matern32, -0.1, 1.0, 1.0), std::domain_error);
}

TEST_CASE("base kernel is non-increasing in distance and bounded by the variance") {
    for (auto f : kFamilies) {
        double prev = eval_base_kernel(f, 0.0, 1.3, 0.8);
        for (int i = 1; i <= 200; ++i) {
            const double v = eval_base_kernel(f, 0.02 * i, 1.3, 0.8);
            CHECK(v <= prev);
            CHECK(v > 0.0);
            CHECK(v <= 1.3);
            prev = v;
        }
    }
}

TEST_CASE("matern smoothness is restricted to half integers") {
    CHECK(matern_family(0.5) == KernelFamily::Matern12);
    CHECK(matern_family(1.5) == KernelFamily::Matern32);
    CHECK(matern_family(2.5) == KernelFamily::Matern52);
    CHECK_THROWS(matern_family(2.0));
    CHECK_THROWS(matern_family(1.0));
}

TEST_CASE("kernel spec validates hyperparameters") {
    CHECK_THROWS(KernelSpec(KernelFamily::RBF, KernelStructure::Separable, {{1.0}, {1.0, 1.0}}));
    CHECK_THROWS(KernelSpec(KernelFamily::RBF, KernelStructure::Additive, {{1.0}, {1.0, 1.0, 1.0}}));
    CHECK_THROWS(KernelSpec(KernelFamily::RBF, KernelStructure::Separable, {{-1.0}, {1.0, 1.0, 1.0}}));
    CHECK_THROWS(KernelSpec(KernelFamily::RBF, KernelStructure::Separable, {{1.0}, {1.0, 0.0, 1.0}}));
    const auto k = additive(KernelFamily::Matern32, 1, 2, 3, 4, 5, 6);
    const auto round = KernelSpec::from_packed(k.family(), k.structure(), k.packed());
    CHECK(round.packed() == k.packed());
    CHECK(k.parameter_count() == 6);
    CHECK(KernelSpec::parameter_count(KernelStructure::Separable) == 4);
}

TEST_CASE("joint kernel examples") {
    const auto sep = separable(KernelFamily::RBF, 2.0, 0.7, 0.3, 0.4);
    const Point3 p{1.0, 2.0, 3.0};
    CHECK(eval_joint_kernel(sep, p, p) == doctest::Approx(2.0));
    const auto add = additive(KernelFamily::RBF, 1.0, 2.0, 0.5, 1.0, 1.0, 1.0);
    CHECK(eval_joint_kernel(add, p, p) == doctest::Approx(3.5));
    const auto unit = separable(KernelFamily::RBF, 1.0, 0.7, 0.3, 0.4);
    CHECK(eval_joint_kernel(unit, p, {1.7, 2.0, 3.0}) == doctest::Approx(std::exp(-0.5)));
}

TEST_CASE("joint kernel matches its closed form") {
    const Point3 p{0.3, 1.1, 2.0}, q{0.9, 0.4, 2.5};
    for (auto f : kFamilies) {
        const auto sep = separable(f, 1.4, 0.5, 0.8, 1.3);
        const double rt = std::abs(p.t - q.t) / 0.5;
        const double rs = std::hypot((p.x - q.x) / 0.8, (p.y - q.y) / 1.3);
        CHECK(eval_joint_kernel(sep, p, q) == doctest::Approx(1.4 * matern_oracle(f, rt) * matern_oracle(f, rs)));

        const auto add = additive(f, 0.6, 1.1, 0.4, 0.9, 0.7, 1.2);
        const double ds = std::hypot(p.x - q.x, p.y - q.y);
        const double dts = std::sqrt(std::pow(p.t - q.t, 2) + ds * ds);
        const double want = 0.6 * matern_oracle(f, std::abs(p.t - q.t) / 0.9) + 1.1 * matern_oracle(f, ds / 0.7) +
                            0.4 * matern_oracle(f, dts / 1.2);
        CHECK(eval_joint_kernel(add, p, q) == doctest::Approx(want));
    }
}

TEST_CASE("joint kernel is symmetric and stationary") {
    const auto pts = random_points(20, 3);
    const Point3 shift{0.37, -1.2, 4.1};
    for (auto f : kFamilies) {
        for (auto spec : {separable(f, 1.2, 0.5, 0.9, 1.4), additive(f, 0.5, 1.0, 0.3, 0.8, 0.6, 1.1)}) {
            for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
                const double v = eval_joint_kernel(spec, pts[i], pts[i + 1]);
                CHECK(v == doctest::Approx(eval_joint_kernel(spec, pts[i + 1], pts[i])).epsilon(1e-14));
                CHECK(v == doctest::Approx(eval_joint_kernel(spec, pts[i] + shift, pts[i + 1] + shift)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("gram matrix matches a scalar loop") {
    const auto a = random_points(3, 11);
    const auto spec = additive(KernelFamily::RBF, 0.7, 1.2, 0.4, 0.9, 0.6, 1.3);
    const Eigen::MatrixXd g = gram_matrix(spec, a);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(g(i, j) == doctest::Approx(eval_joint_kernel(spec, a[i], a[j])));

    const auto b = random_points(5, 12);
    const Eigen::MatrixXd c = gram_matrix(spec, a, b);
    REQUIRE(c.rows() == 3);
    REQUIRE(c.cols() == 5);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 5; ++j) CHECK(c(i, j) == doctest::Approx(eval_joint_kernel(spec, a[i], b[j])));

    const std::vector<Point3> one{{1, 1, 1}};
    CHECK(gram_matrix(spec, one)(0, 0) == doctest::Approx(2.3));
    const std::vector<Point3> twin{{1, 1, 1}, {1, 1, 1}};
    const Eigen::MatrixXd t = gram_matrix(separable(KernelFamily::RBF, 1, 1, 1, 1), twin);
    CHECK(t.isApproxToConstant(1.0));
    const Eigen::MatrixXd j = gram_matrix(spec, a, 0.25);
    CHECK((j - g).isApprox(0.25 * Eigen::MatrixXd::Identity(3, 3)));
}

TEST_CASE("additive gram is the sum of its component grams") {
    const auto pts = random_points(12, 21);
    for (auto f : kFamilies) {
        const auto full = additive(f, 0.8, 1.5, 0.6, 0.7, 1.1, 0.9);
        const auto t_only = additive(f, 0.8, 1e-300, 1e-300, 0.7, 1.1, 0.9);
        const auto s_only = additive(f, 1e-300, 1.5, 1e-300, 0.7, 1.1, 0.9);
        const auto ts_only = additive(f, 1e-300, 1e-300, 0.6, 0.7, 1.1, 0.9);
        const Eigen::MatrixXd sum = gram_matrix(t_only, pts) + gram_matrix(s_only, pts) + gram_matrix(ts_only, pts);
        CHECK((gram_matrix(full, pts) - sum).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("gram matrices of up to 30 points factorise with small jitter") {
    for (unsigned seed = 0; seed < 5; ++seed) {
        const auto pts = random_points(30, 100 + seed);
        for (auto f : kFamilies) {
            for (auto spec : {separable(f, 1.0, 2.0, 2.0, 2.0), additive(f, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0)}) {
                const Eigen::MatrixXd g = gram_matrix(spec, pts, 1e-6);
                Eigen::LLT<Eigen::MatrixXd> llt(g);
                CHECK(llt.info() == Eigen::Success);
            }
        }
    }
}

TEST_CASE("stable cholesky escalates jitter and reports failure") {
    Eigen::MatrixXd pd(2, 2);
    pd << 2, 0.5, 0.5, 1;
    const auto ok = stable_cholesky(pd);
    CHECK(ok.relative_jitter == doctest::Approx(1e-6));
    CHECK(ok.jitter == doctest::Approx(1.5e-6));

    const std::vector<Point3> twin{{1, 1, 1}, {1, 1, 1}};
    const auto s = stable_cholesky(gram_matrix(separable(KernelFamily::RBF, 1, 1, 1, 1), twin));
    CHECK(s.relative_jitter >= 1e-6);
    CHECK(s.relative_jitter <= 1e-2);

    Eigen::MatrixXd bad(2, 2);
    bad << 1, 0, 0, -5;
    CHECK_THROWS_AS(stable_cholesky(bad), ConditioningError);
}

TEST_CASE("condition number examples") {
    CHECK(condition_number(Eigen::MatrixXd::Identity(3, 3)) == doctest::Approx(1.0));
    Eigen::MatrixXd d = Eigen::Vector2d(10, 1).asDiagonal();
    CHECK(condition_number(d) == doctest::Approx(10.0));
    Eigen::MatrixXd m(2, 2);
    m << 1, 0.5, 0.5, 1;
    CHECK(condition_number(m) == doctest::Approx(3.0));
    Eigen::MatrixXd sing(2, 2);
    sing << 1, 1, 1, 1;
    CHECK(std::isinf(condition_number(sing)));
}

TEST_CASE("log gradient matches finite differences") {
    const Point3 p{0.2, 0.5, 0.9}, q{0.6, 0.1, 1.3};
    for (auto f : kFamilies) {
        for (auto spec : {separable(f, 1.3, 0.6, 0.8, 1.1), additive(f, 0.5, 0.9, 0.4, 0.7, 0.6, 1.2)}) {
            const auto base = spec.packed();
            std::vector<double> grad(base.size());
            joint_kernel_log_gradient(spec, p, q, grad);
            for (std::size_t i = 0; i < base.size(); ++i) {
                auto a = base, b = base;
                const double h = 1e-6;
                a[i] *= std::exp(h);
                b[i] *= std::exp(-h);
                const double fd = (eval_joint_kernel(KernelSpec::from_packed(f, spec.structure(), a), p, q) -
                                   eval_joint_kernel(KernelSpec::from_packed(f, spec.structure(), b), p, q)) /
                                  (2 * h);
                CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-6));
            }
        }
    }
}
