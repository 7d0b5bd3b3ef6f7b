#include <doctest.h>

#include <cmath>

#include "icc/bridge_discrete.hpp"
#include "icc/errors.hpp"
#include "icc/pipelines.hpp"
#include "icc/sieve_bridge.hpp"
#include "icc/synth.hpp"

#include "support/linear_moment_oracle.hpp"

using namespace icc;
using linalg::Matrix;
using synth::Axis;

namespace {

// Exact instrument moments E[c b'] and E[c y] for the confounded linear
// example under the (1, A, W) / (1, Z1, Z2) bases, taken from the
// covariance oracle.
void oracle_moments(Matrix& m_cb, std::vector<double>& c_y) {
    auto pm = icc_test::moment_oracle(synth::LinearDGPSpec::confounded_example());
    // Moment order: (y, a, z1, z2, w).
    m_cb = Matrix(3, 3);
    m_cb(0, 0) = 1.0;  // E[1 * 1]; all variables are mean zero
    m_cb(1, 1) = pm.m(2, 1);  // E[z1 a]
    m_cb(1, 2) = pm.m(2, 4);  // E[z1 w]
    m_cb(2, 1) = pm.m(3, 1);  // E[z2 a]
    m_cb(2, 2) = pm.m(3, 4);  // E[z2 w]
    c_y = {0.0, pm.m(2, 0), pm.m(3, 0)};
}

}  // namespace

TEST_CASE("polynomial features include intercept, powers and interactions") {
    Matrix values(2, 2);
    values(0, 0) = 2.0;
    values(0, 1) = 3.0;
    values(1, 0) = -1.0;
    values(1, 1) = 0.5;

    auto lin = sieve::build_features(values, sieve::BasisSpec::poly({1, 1}));
    REQUIRE(lin.x.cols == 3);  // (1, A, W)
    CHECK(lin.x(0, 0) == 1.0);
    CHECK(lin.x(0, 1) == 2.0);
    CHECK(lin.x(0, 2) == 3.0);

    auto quad = sieve::build_features(values, sieve::BasisSpec::poly({2, 2}, true));
    REQUIRE(quad.x.cols == 6);  // adds A^2, W^2, AW
    CHECK(quad.x(0, 2) == 4.0);   // A^2
    CHECK(quad.x(0, 4) == 9.0);   // W^2
    CHECK(quad.x(0, 5) == 6.0);   // AW
}

TEST_CASE("out-of-range knots are dropped with a warning") {
    Matrix values(4, 1);
    for (int i = 0; i < 4; ++i) values(i, 0) = i;  // range [0, 3]
    sieve::BasisSpec spec;
    spec.family = sieve::BasisSpec::Family::piecewise_linear;
    spec.knots = {{1.5, 9.0}};
    auto feats = sieve::build_features(values, spec);
    CHECK(feats.x.cols == 3);  // 1, x, hinge(1.5); the 9.0 knot dropped
    REQUIRE(feats.warnings.size() == 1);
    CHECK(feats.warnings[0].find("9.0") != std::string::npos);
    CHECK(feats.x(3, 2) == doctest::Approx(1.5));
}

TEST_CASE("population moments identify the structural slope exactly") {
    Matrix m_cb;
    std::vector<double> c_y;
    oracle_moments(m_cb, c_y);
    auto fit = sieve::fit_sieve_from_moments(m_cb, c_y, 0.0);
    CHECK(fit.moment_residual < 1e-14);
    CHECK(fit.theta[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(fit.theta[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.theta[2] == doctest::Approx(1.5).epsilon(1e-12));

    fit.basis_h = sieve::BasisSpec::poly({1, 1});
    Matrix w_sample(1, 1, 0.0);
    auto rep = sieve::effect_from_sieve(fit, w_sample, ate_contrast(1, 0));
    CHECK(rep.j_hat == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("omitting the proxy feature leaves a detectable moment residual") {
    Matrix m_cb;
    std::vector<double> c_y;
    oracle_moments(m_cb, c_y);
    Matrix no_w(3, 2);
    for (std::size_t i = 0; i < 3; ++i) {
        no_w(i, 0) = m_cb(i, 0);
        no_w(i, 1) = m_cb(i, 1);
    }
    auto fit = sieve::fit_sieve_from_moments(no_w, c_y, 0.0);
    CHECK(fit.moment_residual > 0.3);
    // The best instrument fit without the proxy is exactly the 2SLS slope.
    CHECK(fit.theta[1] == doctest::Approx(icc_test::kConfounded2slsBeta).epsilon(1e-12));
}

TEST_CASE("indicator bases reproduce the discrete outcome-bridge solution") {
    auto pop = synth::random_population(2, 4, 2, 3, 7);
    auto p_aw_z = synth::cond_matrix(pop, {Axis::A, Axis::W}, {Axis::Z});
    auto sol = bridge::solve_outcome_bridge(p_aw_z, pop.ey_given_z(), 1e-8);

    // E[c b'] with c = z indicators and b = (a, w) cell indicators is the
    // joint P(z, (a,w)); E[c y] is E[Y 1{z}]. Built directly on the tensor.
    Matrix m_cb(pop.d_z, pop.d_a * pop.d_w);
    std::vector<double> c_y(pop.d_z, 0.0);
    for (std::size_t u = 0; u < pop.d_u; ++u)
        for (std::size_t z = 0; z < pop.d_z; ++z)
            for (std::size_t a = 0; a < pop.d_a; ++a)
                for (std::size_t w = 0; w < pop.d_w; ++w) {
                    double mass = pop.prob(u, z, a, w);
                    m_cb(z, a * pop.d_w + w) += mass;
                    c_y[z] += mass * pop.k0_at(a, u);
                }
    auto fit = sieve::fit_sieve_from_moments(m_cb, c_y, 0.0);
    REQUIRE(fit.theta.size() == sol.coeffs.size());
    for (std::size_t i = 0; i < sol.coeffs.size(); ++i)
        CHECK(fit.theta[i] == doctest::Approx(sol.coeffs[i]).epsilon(1e-10));
}

TEST_CASE("ridge path converges to the minimum-norm solution") {
    Matrix m_cb;
    std::vector<double> c_y;
    oracle_moments(m_cb, c_y);
    auto base = sieve::fit_sieve_from_moments(m_cb, c_y, 0.0);
    double prev = 1e300;
    for (double ridge : {1e-2, 1e-4, 1e-6}) {
        auto fit = sieve::fit_sieve_from_moments(m_cb, c_y, ridge);
        double dist = 0.0;
        for (std::size_t i = 0; i < base.theta.size(); ++i)
            dist += (fit.theta[i] - base.theta[i]) * (fit.theta[i] - base.theta[i]);
        dist = std::sqrt(dist);
        CHECK(dist < prev);
        prev = dist;
    }
    CHECK(prev < 1e-4);
}

TEST_CASE("sample fit recovers an exogenous linear bridge") {
    // Truth h(A, W) = A: the treatment is exogenous, and W stays a strong
    // (but structurally irrelevant) feature through the confounder link.
    auto spec = synth::LinearDGPSpec::confounded_example();
    spec.gamma_a(0, 0) = 0.0;
    spec.gamma_y[0] = 0.0;
    spec.zeta[0] = 0.0;
    auto parts = pipelines::linear_parts(synth::sample_linear(spec, 20000, 19));
    auto fit = sieve::fit_sieve_bridge(parts.y, parts.a, parts.w, parts.z,
                                       sieve::BasisSpec::poly({1, 1}),
                                       sieve::BasisSpec::poly({1, 1}));
    CHECK(std::abs(fit.theta[1] - 1.0) < 0.05);
    CHECK(std::abs(fit.theta[2]) < 0.05);
}

TEST_CASE("a bridge feature orthogonal to every instrument feature is null") {
    // Exactly orthogonalized in sample: the extra column only moves theta
    // along the null space and cannot move the effect.
    auto spec = synth::LinearDGPSpec::confounded_example();
    auto parts = pipelines::linear_parts(synth::sample_linear(spec, 100000, 23));
    std::size_t n = parts.y.size();

    auto b = sieve::build_features(
        [&] {
            Matrix aw(n, 2);
            for (std::size_t i = 0; i < n; ++i) {
                aw(i, 0) = parts.a(i, 0);
                aw(i, 1) = parts.w(i, 0);
            }
            return aw;
        }(),
        sieve::BasisSpec::poly({1, 1}));
    auto c = sieve::build_features(parts.z, sieve::BasisSpec::poly({1, 1}));

    Matrix m_cb = linalg::matmul(linalg::transpose(c.x), b.x);
    std::vector<double> c_y = linalg::vecmat(parts.y, c.x);
    for (auto& v : m_cb.data) v /= static_cast<double>(n);
    for (auto& v : c_y) v /= static_cast<double>(n);
    auto base = sieve::fit_sieve_from_moments(m_cb, c_y, 0.0);

    // Extra feature: w^2 residualized on the instrument features in-sample.
    std::vector<double> extra(n);
    for (std::size_t i = 0; i < n; ++i) extra[i] = parts.w(i, 0) * parts.w(i, 0);
    linalg::Matrix cg = linalg::matmul(linalg::transpose(c.x), c.x);
    std::vector<double> cx = linalg::vecmat(extra, c.x);
    std::vector<double> coef = linalg::matvec(linalg::pinv(cg), cx);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c.x.cols; ++k) extra[i] -= c.x(i, k) * coef[k];

    Matrix m4(c.x.cols, b.x.cols + 1);
    for (std::size_t i = 0; i < c.x.cols; ++i)
        for (std::size_t j = 0; j < b.x.cols; ++j) m4(i, j) = m_cb(i, j);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c.x.cols; ++k)
            m4(k, b.x.cols) += c.x(i, k) * extra[i] / static_cast<double>(n);
    auto wide = sieve::fit_sieve_from_moments(m4, c_y, 0.0);

    // Same contrast effect: theta on the treatment feature is the ATE here.
    CHECK(std::abs(wide.theta[1] - base.theta[1]) < 1e-6);
    CHECK(std::abs(wide.theta[3]) < 1e-8);  // null direction stays at zero
}

TEST_CASE("underdetermined systems warn and overparameterized fits are rejected") {
    Matrix m_cb(2, 4, 0.5);
    auto fit = sieve::fit_sieve_from_moments(m_cb, {1.0, 1.0}, 0.0);
    REQUIRE(!fit.warnings.empty());
    CHECK(fit.warnings[0].find("underdetermined") != std::string::npos);

    std::vector<double> y(3, 1.0);
    Matrix a(3, 1, 1.0), w(3, 1, 2.0), z(3, 1, 0.5);
    CHECK_THROWS_AS(sieve::fit_sieve_bridge(y, a, w, z, sieve::BasisSpec::poly({3, 3}, true),
                                            sieve::BasisSpec::poly({1})),
                    schema_error);
}
