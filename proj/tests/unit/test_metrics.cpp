#include <doctest.h>

#include "nphawkes/metrics_eval.hpp"

#include <random>

using namespace nphawkes;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::gamma_distribution<double> g(2.0, 1.0);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
    return m;
}

}  // namespace

TEST_CASE("mse examples") {
    PosteriorFieldSamples exact{Eigen::MatrixXd::Constant(4, 3, 1.5)};
    const Eigen::VectorXd truth = Eigen::VectorXd::Constant(3, 1.5);
    CHECK(pm_mse(exact, truth) == 0.0);
    CHECK(pe_mse(exact, truth) == 0.0);

    PosteriorFieldSamples two{Eigen::Vector2d(0.0, 2.0)};
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
    CHECK(pm_mse(two, zero) == doctest::Approx(1.0));
    CHECK(pe_mse(two, zero) == doctest::Approx(2.0));
}

TEST_CASE("mse matches a scalar loop") {
    const Eigen::MatrixXd s = random_matrix(7, 5, 1);
    const Eigen::VectorXd truth = random_matrix(5, 1, 2).col(0);
    PosteriorFieldSamples p{s};
    double pm = 0.0, pe = 0.0;
    for (int n = 0; n < 5; ++n) {
        double mean = 0.0, sq = 0.0;
        for (int r = 0; r < 7; ++r) {
            mean += s(r, n) / 7.0;
            sq += (s(r, n) - truth[n]) * (s(r, n) - truth[n]) / 7.0;
        }
        pm += (mean - truth[n]) * (mean - truth[n]) / 5.0;
        pe += sq / 5.0;
    }
    CHECK(pm_mse(p, truth) == doctest::Approx(pm).epsilon(1e-13));
    CHECK(pe_mse(p, truth) == doctest::Approx(pe).epsilon(1e-13));
}

TEST_CASE("bias variance identity and node ordering") {
    for (unsigned seed = 0; seed < 20; ++seed) {
        const Eigen::MatrixXd s = random_matrix(40, 9, 10 + seed);
        const Eigen::VectorXd truth = random_matrix(9, 1, 100 + seed).col(0);
        PosteriorFieldSamples p{s};
        const double pm = pm_mse(p, truth), pe = pe_mse(p, truth);
        CHECK(std::abs(pe - pm - mean_posterior_variance(p)) <= 1e-12);
        CHECK(pe >= pm);
        CHECK(pm_mse(PosteriorFieldSamples{s}, p.mean()) <= 1e-30);

        Eigen::PermutationMatrix<Eigen::Dynamic> perm(9);
        perm.setIdentity();
        std::mt19937_64 rng(seed);
        std::shuffle(perm.indices().data(), perm.indices().data() + 9, rng);
        PosteriorFieldSamples q{s * perm};
        const Eigen::VectorXd tq = perm.transpose() * truth;
        CHECK(pm_mse(q, tq) == doctest::Approx(pm).epsilon(1e-13));
        CHECK(pe_mse(q, tq) == doctest::Approx(pe).epsilon(1e-13));
    }
}

TEST_CASE("expected log likelihood") {
    SpatioTemporalWindow w{4, 2, 2, 0.5, 0.3, 0.3};
    const auto grids = make_quadrature(w, {5, 5, 5}, {4, 4, 4});
    const auto empty = prepare_data(ingest_events({}, w), w, grids);
    auto constant = [&](const PreparedData& d, double c) {
        return evaluate_rates(d, [c](const Point3&) { return c; }, [](const Point3&) { return 0.0; });
    };
    CHECK(expected_log_likelihood({constant(empty, 0.7)}, empty) == doctest::Approx(-0.7 * 16));

    const auto d = prepare_data(ingest_events({{0.5, 1, 1}, {0.6, 1.1, 1.0}, {2.0, 0.4, 1.5}}, w), w, grids);
    std::vector<IntensityValues> draws;
    double want = 0.0;
    for (double c : {0.5, 1.2, 2.0}) {
        const auto r = evaluate_rates(d, [c](const Point3& p) { return c + 0.1 * p.t; },
                                      [c](const Point3& l) { return c * std::exp(-l.t); });
        draws.push_back(r);
        want += log_likelihood(d, r) / 3.0;
    }
    CHECK(expected_log_likelihood(draws, d) == doctest::Approx(want));
    const std::vector<IntensityValues> same(4, draws[1]);
    CHECK(expected_log_likelihood(same, d) == doctest::Approx(log_likelihood(d, draws[1])));
}
