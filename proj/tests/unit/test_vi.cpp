#include <doctest.h>

#include "nphawkes/vi.hpp"

#include <Eigen/LU>

#include <cmath>
#include <memory>
#include <numbers>
#include <random>

using namespace nphawkes;

namespace {

struct Toy {
    SpatioTemporalWindow window{2.0, 1.0, 1.0, 0.5, 0.4, 0.4};
    PreparedData data;
    std::shared_ptr<VariationalModel> model;
};

Toy make_toy(std::array<std::size_t, 3> mu_counts, std::array<std::size_t, 3> phi_counts,
             KernelStructure structure, KernelFamily family) {
    Toy toy;
    std::vector<Point3> ev{{0.1, 0.2, 0.3}, {0.3, 0.25, 0.35}, {0.5, 0.7, 0.1}, {0.6, 0.6, 0.2},
                           {1.1, 0.4, 0.9}, {1.2, 0.5, 0.8}, {1.5, 0.9, 0.9}};
    const EventSequence seq = ingest_events(ev, toy.window);
    toy.data = prepare_data(seq, toy.window, make_quadrature(toy.window, {5, 4, 4}, {4, 3, 3}));
    GPComponentSettings mu{family, structure, {}, toy.window.domain(), mu_counts, {}, 0.3};
    GPComponentSettings phi{family, structure, {}, toy.window.support(), phi_counts, {}, 0.3};
    auto bg = std::make_shared<GPComponent>(mu, toy.data.mu_grid.grid, toy.data.data.events);
    auto tr = std::make_shared<GPComponent>(phi, toy.data.phi_grid.grid, toy.data.pair_lags);
    toy.model = std::make_shared<VariationalModel>(bg, tr);
    return toy;
}

void check_gradient(const Toy& toy) {
    std::mt19937_64 rng(5);
    Eigen::VectorXd p = toy.model->initial_parameters() + 0.2 * standard_normal(rng, toy.model->parameter_count());
    const Eigen::VectorXd noise = standard_normal(rng, toy.model->noise_dimension());
    Eigen::VectorXd g;
    const double f0 = toy.model->elbo_draw(toy.data, std::span<const double>(p.data(), p.size()), noise, &g);
    REQUIRE(std::isfinite(f0));
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double h = 1e-5;
        Eigen::VectorXd a = p, b = p;
        a[i] += h;
        b[i] -= h;
        const double fa = toy.model->elbo_draw(toy.data, std::span<const double>(a.data(), a.size()), noise, nullptr);
        const double fb = toy.model->elbo_draw(toy.data, std::span<const double>(b.data(), b.size()), noise, nullptr);
        const double fd = (fa - fb) / (2 * h);
        CAPTURE(i);
        CHECK(g[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
}

}  // namespace

TEST_CASE("analytic ELBO gradient matches finite differences for every parameter") {
    check_gradient(make_toy({2, 2, 1}, {2, 1, 2}, KernelStructure::Additive, KernelFamily::RBF));
    check_gradient(make_toy({2, 2, 2}, {2, 2, 1}, KernelStructure::Separable, KernelFamily::Matern52));
    check_gradient(make_toy({2, 1, 2}, {1, 2, 2}, KernelStructure::Additive, KernelFamily::Matern32));
    check_gradient(make_toy({3, 2, 1}, {2, 2, 1}, KernelStructure::Separable, KernelFamily::Matern12));
}

TEST_CASE("gaussian log density") {
    const Eigen::VectorXd m = Eigen::Vector3d(0.5, -1.0, 2.0);
    CHECK(gaussian_log_density(m, m, Eigen::MatrixXd::Identity(3, 3)) == doctest::Approx(-1.5 * std::log(2 * std::numbers::pi)));
    Eigen::MatrixXd s1(1, 1);
    s1 << 0.7;
    CHECK(gaussian_log_density(Eigen::VectorXd::Constant(1, 1.7), Eigen::VectorXd::Constant(1, 1.0), s1) ==
          doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * 0.49) - 0.5));

    Eigen::MatrixXd l(3, 3);
    l << 1.2, 0, 0, 0.3, 0.8, 0, -0.4, 0.5, 0.6;
    const Eigen::VectorXd x = Eigen::Vector3d(0.1, 0.2, 0.9);
    const Eigen::MatrixXd cov = l * l.transpose();
    const Eigen::VectorXd r = x - m;
    const double want = -1.5 * std::log(2 * std::numbers::pi) - 0.5 * std::log(cov.determinant()) - 0.5 * r.dot(cov.inverse() * r);
    CHECK(gaussian_log_density(x, m, l) == doctest::Approx(want).epsilon(1e-12));
    Eigen::VectorXd bad = x;
    bad[0] = std::nan("");
    CHECK_THROWS(gaussian_log_density(bad, m, l));
}

TEST_CASE("gaussian entropy matches its closed form") {
    Eigen::MatrixXd l(2, 2);
    l << 0.6, 0, -0.3, 1.4;
    const Eigen::VectorXd m = Eigen::Vector2d(1.0, -2.0);
    std::mt19937_64 rng(8);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = -gaussian_log_density(m + l * standard_normal(rng, 2), m, l);
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    const double exact = std::log(2 * std::numbers::pi * std::numbers::e) + std::log(l.determinant());
    CHECK(std::abs(mean - exact) <= 3 * se);
}

TEST_CASE("log-normal hyperparameter draws have the log-normal moments") {
    const Eigen::VectorXd m = Eigen::Vector2d(-0.5, 0.3);
    Eigen::MatrixXd l(2, 2);
    l << 0.3, 0, 0.1, 0.2;
    const Eigen::MatrixXd s = l * l.transpose();
    std::mt19937_64 rng(4);
    const int n = 100000;
    Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sum2 = Eigen::Vector2d::Zero();
    double cross = 0.0, cross2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d t = (m + l * standard_normal(rng, 2)).array().exp();
        sum += t;
        sum2 += t.cwiseAbs2();
        cross += t[0] * t[1];
        cross2 += t[0] * t[0] * t[1] * t[1];
    }
    for (int i = 0; i < 2; ++i) {
        const double mean = sum[i] / n;
        const double se = std::sqrt((sum2[i] / n - mean * mean) / n);
        CHECK(std::abs(mean - std::exp(m[i] + 0.5 * s(i, i))) <= 3 * se);
    }
    const double ec = cross / n;
    const double want = std::exp(m[0] + m[1] + 0.5 * (s(0, 0) + s(1, 1)) + s(0, 1));
    CHECK(std::abs(ec - want) <= 3 * std::sqrt((cross2 / n - ec * ec) / n));
}

TEST_CASE("gamma hyperprior includes the log jacobian") {
    const HyperPrior p = HyperPrior::uniform(2, {2.0, 2.0});
    const std::vector<double> a{std::log(0.5), std::log(3.0)};
    double want = 0.0;
    for (double v : a) {
        const double t = std::exp(v);
        want += 2.0 * std::log(2.0) - std::lgamma(2.0) + std::log(t) - 2.0 * t + v;
    }
    std::vector<double> g(2, 0.0);
    CHECK(p.log_density(a, g) == doctest::Approx(want));
    for (int i = 0; i < 2; ++i) CHECK(g[static_cast<std::size_t>(i)] == doctest::Approx(2.0 - 2.0 * std::exp(a[static_cast<std::size_t>(i)])));
    CHECK_THROWS(HyperPrior::uniform(1, {0.0, 1.0}));
}

TEST_CASE("ELBO estimates are seed deterministic and agree with a large oracle") {
    const Toy toy = make_toy({2, 2, 1}, {2, 1, 2}, KernelStructure::Additive, KernelFamily::RBF);
    const Eigen::VectorXd p = toy.model->initial_parameters();
    const auto a = elbo_estimate(*toy.model, toy.data, as_span(p), 16, 3, true);
    const auto b = elbo_estimate(*toy.model, toy.data, as_span(p), 16, 3, true);
    CHECK(a.value == b.value);
    CHECK(a.gradient == b.gradient);
    CHECK(elbo_estimate(*toy.model, toy.data, as_span(p), 16, 4, false).value != a.value);

    const auto est = elbo_estimate(*toy.model, toy.data, as_span(p), 4096, 1, false);
    const auto oracle = elbo_estimate(*toy.model, toy.data, as_span(p), 100000, 99, false);
    CHECK(std::abs(est.value - oracle.value) <= 3 * std::hypot(est.standard_error, oracle.standard_error));
}

TEST_CASE("ELBO draw without events is the compensator plus the log ratio") {
    SpatioTemporalWindow w{2.0, 1.0, 1.0, 0.5, 0.4, 0.4};
    const auto d = prepare_data(ingest_events({}, w), w, make_quadrature(w, {5, 4, 4}, {4, 3, 3}), false);
    GPComponentSettings mu{KernelFamily::RBF, KernelStructure::Additive, {}, w.domain(), {2, 2, 2}, {}, 0.1};
    auto bg = std::make_shared<GPComponent>(mu, d.mu_grid.grid, d.data.events);
    const VariationalModel model(bg, nullptr);
    std::mt19937_64 rng(2);
    const Eigen::VectorXd p = model.initial_parameters();
    const Eigen::VectorXd noise = standard_normal(rng, model.noise_dimension());
    const auto draw = bg->draw(as_span(p), noise);
    const double elbo = model.elbo_draw(d, as_span(p), noise, nullptr);
    CHECK(elbo - draw.log_ratio == doctest::Approx(-d.mu_weights.dot(draw.node_rates)));
}

TEST_CASE("fit contracts") {
    const Toy toy = make_toy({2, 2, 1}, {2, 1, 2}, KernelStructure::Additive, KernelFamily::RBF);
    const Eigen::VectorXd init = toy.model->initial_parameters();
    OptimizerConfig cfg;
    cfg.iterations = 0;
    const auto none = fit(*toy.model, toy.data, init, cfg);
    CHECK(none.parameters == init);
    CHECK(none.elbo_trace.empty());

    cfg.iterations = 60;
    cfg.seed = 5;
    const auto a = fit(*toy.model, toy.data, init, cfg);
    const auto b = fit(*toy.model, toy.data, init, cfg);
    CHECK(a.elbo_trace.size() == 60);
    CHECK(a.elbo_trace == b.elbo_trace);
    CHECK(a.parameters == b.parameters);
    CHECK(a.final_elbo == b.final_elbo);

    cfg.mc_samples = 0;
    CHECK_THROWS(fit(*toy.model, toy.data, init, cfg));
}

TEST_CASE("restart selection") {
    CHECK(argmax_elbo({-5, -3, -4}) == 1);
    CHECK(argmax_elbo({-2}) == 0);
    CHECK(argmax_elbo({-INFINITY, -7, -7}) == 1);
    CHECK_THROWS(argmax_elbo({}));

    const Toy toy = make_toy({2, 2, 1}, {2, 1, 2}, KernelStructure::Additive, KernelFamily::RBF);
    OptimizerConfig cfg;
    cfg.iterations = 20;
    const auto one = multi_restart(*toy.model, toy.data, toy.model->initial_parameters(), cfg, {8});
    CHECK(one.runs.size() == 1);
    CHECK(one.best.seed == 8);
    const auto many = multi_restart(*toy.model, toy.data, toy.model->initial_parameters(), cfg, {1, 2, 3, 4});
    for (const auto& r : many.runs) CHECK(many.best.final_elbo >= r.final_elbo);
    CHECK_THROWS(multi_restart(*toy.model, toy.data, toy.model->initial_parameters(), cfg, {}));
}

TEST_CASE("background gradients do not depend on how the trigger factor is written") {
    // u_phi = m + L e and u_phi = m + (-L) e have the same law; flipping the trigger noise is
    // that change of factor. Background gradients must agree in expectation.
    const Toy toy = make_toy({2, 2, 1}, {2, 1, 2}, KernelStructure::Additive, KernelFamily::RBF);
    std::mt19937_64 rng(6);
    const Eigen::VectorXd p = toy.model->initial_parameters() + 0.1 * standard_normal(rng, toy.model->parameter_count());
    const auto e_bg = static_cast<Eigen::Index>(toy.model->background().noise_dimension());
    const Eigen::Index n_mean = 4;
    const int n = 4000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_mean), sum2 = sum;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd noise = standard_normal(rng, toy.model->noise_dimension());
        Eigen::VectorXd g1, g2;
        toy.model->elbo_draw(toy.data, as_span(p), noise, &g1);
        noise.tail(noise.size() - e_bg) *= -1.0;
        toy.model->elbo_draw(toy.data, as_span(p), noise, &g2);
        const Eigen::VectorXd d = g1.head(n_mean) - g2.head(n_mean);
        sum += d;
        sum2 += d.cwiseAbs2();
    }
    for (Eigen::Index i = 0; i < n_mean; ++i) {
        const double mean = sum[i] / n;
        const double se = std::sqrt((sum2[i] / n - mean * mean) / n);
        CHECK(std::abs(mean) <= 3 * se);
    }
}
