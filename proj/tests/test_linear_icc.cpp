#include <doctest.h>

#include <cmath>

#include "icc/errors.hpp"
#include "icc/linear_icc.hpp"
#include "icc/pipelines.hpp"
#include "icc/rng.hpp"
#include "icc/synth.hpp"

#include "support/linear_moment_oracle.hpp"

using namespace icc;
using linalg::Matrix;

namespace {

pipelines::LinearParts sample_parts(const synth::LinearDGPSpec& spec, std::size_t n,
                                    std::uint64_t seed) {
    return pipelines::linear_parts(synth::sample_linear(spec, n, seed));
}

}  // namespace

TEST_CASE("population moments: proxy projection removes all confounding bias") {
    auto spec = synth::LinearDGPSpec::confounded_example();
    auto pm = icc_test::moment_oracle(spec);

    // Spot-check the oracle against hand covariance algebra.
    CHECK(pm.m(2, 1) == doctest::Approx(1.3).epsilon(1e-12));   // Cov(z1, a)
    CHECK(pm.m(3, 1) == doctest::Approx(0.3).epsilon(1e-12));   // Cov(z2, a)
    CHECK(pm.m(2, 0) == doctest::Approx(1.75).epsilon(1e-12));  // Cov(z1, y)
    CHECK(pm.m(3, 0) == doctest::Approx(0.0).epsilon(1e-12));   // Cov(z2, y)
    CHECK(pm.m(4, 4) == doctest::Approx(2.13).epsilon(1e-12));  // Var(w)

    auto fit = linear::population_fit_icc(pm, 1);
    CHECK(fit.beta[0] == doctest::Approx(1.0).epsilon(1e-12));

    auto tsls = linear::population_fit_2sls(pm);
    CHECK(tsls[0] == doctest::Approx(icc_test::kConfounded2slsBeta).epsilon(1e-12));
    CHECK(std::abs(tsls[0] - 1.0) > 0.1);  // the bias the proxies remove
}

TEST_CASE("the two computational forms and the explicit two-stage fit agree") {
    auto spec = synth::LinearDGPSpec::confounded_example();
    auto parts = sample_parts(spec, 500, 77);

    auto direct = linear::fit_icc(parts.y, parts.a, parts.z, parts.w, 1);
    auto control = linear::fit_icc_control_form(parts.y, parts.a, parts.z, parts.w, 1);
    auto staged = linear::fit_icc_two_stage(parts.y, parts.a, parts.z, parts.w, 1);
    CHECK(std::abs(direct.beta_hat[0] - control.beta_hat[0]) < 1e-10);
    CHECK(std::abs(direct.beta_hat[0] - staged.beta_hat[0]) < 1e-10);
    CHECK(std::abs(direct.delta_hat[0] - staged.delta_hat[0]) < 1e-9);
}

TEST_CASE("agreement of the three forms over many random designs") {
    icc::rng::Rng r(123);
    for (int rep = 0; rep < 20; ++rep) {
        auto spec = synth::LinearDGPSpec::confounded_example();
        spec.zeta[0] = r.uniform(-1.0, 1.0);
        spec.gamma_y[0] = r.uniform(-1.5, 1.5);
        spec.pi_fs(1, 0) = r.uniform(0.2, 1.0);
        auto parts = sample_parts(spec, 200 + 10 * rep, 1000 + rep);
        auto direct = linear::fit_icc(parts.y, parts.a, parts.z, parts.w, 1);
        auto control = linear::fit_icc_control_form(parts.y, parts.a, parts.z, parts.w, 1);
        auto staged = linear::fit_icc_two_stage(parts.y, parts.a, parts.z, parts.w, 1);
        CHECK(std::abs(direct.beta_hat[0] - control.beta_hat[0]) < 1e-10);
        CHECK(std::abs(direct.beta_hat[0] - staged.beta_hat[0]) < 1e-10);
    }
}

TEST_CASE("rank zero on an unconfounded design reduces to 2SLS exactly") {
    auto spec = synth::LinearDGPSpec::confounded_example();
    spec.gamma_a(0, 0) = 0.0;
    spec.gamma_y[0] = 0.0;
    spec.gamma_w(0, 0) = 0.0;
    spec.gamma_tilde_z(0, 0) = 0.0;
    spec.gamma_tilde_z(1, 0) = 0.0;
    auto parts = sample_parts(spec, 400, 5);
    auto icc_fit = linear::fit_icc(parts.y, parts.a, parts.z, parts.w, 0);
    auto tsls = linear::fit_2sls(parts.y, parts.a, parts.z);
    CHECK(std::abs(icc_fit.beta_hat[0] - tsls.coef[0]) < 1e-11);
    CHECK(icc_fit.rank_used == 0);
    // And so does the rank-zero control-function form (classical CF-IV).
    auto cf = linear::fit_icc_control_form(parts.y, parts.a, parts.z, parts.w, 0);
    CHECK(std::abs(cf.beta_hat[0] - tsls.coef[0]) < 1e-11);
}

TEST_CASE("invertible reparameterizations of the proxies do not move the fit") {
    // Retained rank equal to d_W: the projection span, and hence the fit,
    // only depends on the column space of the proxies.
    auto spec = synth::LinearDGPSpec::confounded_example();
    spec.d_u = 2;
    spec.d_w = 2;
    spec.d_z = 3;
    spec.gamma_y = {1.0, -0.5};
    spec.gamma_a = Matrix(2, 1);
    spec.gamma_a(0, 0) = 1.0;
    spec.gamma_a(1, 0) = 0.4;
    spec.gamma_w = Matrix(2, 2);
    spec.gamma_w(0, 0) = 1.0;
    spec.gamma_w(0, 1) = -0.6;
    spec.gamma_w(1, 0) = 0.3;
    spec.gamma_w(1, 1) = 0.9;
    spec.zeta = {0.5, 0.2};
    spec.pi_fs = Matrix(3, 1);
    spec.pi_fs(0, 0) = 1.0;
    spec.pi_fs(1, 0) = 0.5;
    spec.pi_fs(2, 0) = -0.4;
    spec.gamma_tilde_z = Matrix(3, 2);
    spec.gamma_tilde_z(0, 0) = 0.3;
    spec.gamma_tilde_z(1, 0) = -0.2;
    spec.gamma_tilde_z(2, 0) = 0.1;
    spec.gamma_tilde_z(0, 1) = -0.1;
    spec.gamma_tilde_z(1, 1) = 0.25;
    spec.gamma_tilde_z(2, 1) = 0.15;
    spec.sigma_z = Matrix::identity(3);
    spec.noise_cov = Matrix::identity(6);
    auto parts = sample_parts(spec, 600, 6);

    auto base = linear::fit_icc(parts.y, parts.a, parts.z, parts.w, 2);

    Matrix b(2, 2);
    b(0, 0) = 2.0;
    b(0, 1) = -1.0;
    b(1, 0) = 0.5;
    b(1, 1) = 3.0;
    Matrix w_mixed = linalg::matmul(parts.w, b);
    auto mixed = linear::fit_icc(parts.y, parts.a, parts.z, w_mixed, 2);
    CHECK(std::abs(base.beta_hat[0] - mixed.beta_hat[0]) < 1e-10);
}

TEST_CASE("matrix-valued treatments are handled by the same algebra") {
    synth::LinearDGPSpec spec;
    spec.d_a = 2;
    spec.d_u = 1;
    spec.d_z = 4;
    spec.d_w = 1;
    spec.beta = {1.0, -0.5};
    spec.gamma_y = {1.0};
    spec.gamma_a = Matrix(1, 2);
    spec.gamma_a(0, 0) = 1.0;
    spec.gamma_a(0, 1) = -0.6;
    spec.gamma_w = Matrix(1, 1);
    spec.gamma_w(0, 0) = 1.0;
    spec.zeta = {0.5};
    spec.pi_fs = Matrix(4, 2);
    spec.pi_fs(0, 0) = 1.0;
    spec.pi_fs(1, 0) = 0.4;
    spec.pi_fs(2, 1) = 0.9;
    spec.pi_fs(3, 1) = -0.5;
    spec.gamma_tilde_z = Matrix(4, 1);
    spec.gamma_tilde_z(0, 0) = 0.3;
    spec.gamma_tilde_z(1, 0) = -0.2;
    spec.gamma_tilde_z(2, 0) = 0.15;
    spec.gamma_tilde_z(3, 0) = 0.1;
    spec.sigma_z = Matrix::identity(4);
    spec.noise_cov = Matrix::identity(5);

    // Exact recovery from population moments.
    auto pm = icc_test::moment_oracle(spec);
    auto pop_fit = linear::population_fit_icc(pm, 1);
    CHECK(pop_fit.beta[0] == doctest::Approx(1.0).epsilon(1e-11));
    CHECK(pop_fit.beta[1] == doctest::Approx(-0.5).epsilon(1e-11));

    // Sample forms still agree to working precision. The dataset role
    // checks are single-treatment by design, so stack the matrices directly.
    Dataset ds = synth::sample_linear(spec, 800, 3);
    std::vector<double> y = ds.at("y").values;
    Matrix a(800, 2), z(800, 4), w(800, 1);
    for (std::size_t i = 0; i < 800; ++i) {
        a(i, 0) = ds.at("a1").values[i];
        a(i, 1) = ds.at("a2").values[i];
        for (std::size_t k = 0; k < 4; ++k)
            z(i, k) = ds.at("z" + std::to_string(k + 1)).values[i];
        w(i, 0) = ds.at("w1").values[i];
    }
    auto direct = linear::fit_icc(y, a, z, w, 1);
    auto control = linear::fit_icc_control_form(y, a, z, w, 1);
    auto staged = linear::fit_icc_two_stage(y, a, z, w, 1);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(std::abs(direct.beta_hat[k] - control.beta_hat[k]) < 1e-10);
        CHECK(std::abs(direct.beta_hat[k] - staged.beta_hat[k]) < 1e-10);
    }
    CHECK(direct.cov.rows == 3);  // two slopes plus one proxy direction
}

TEST_CASE("rank selection by declaration and by gap") {
    CHECK(linear::select_rank({5.0, 4.9, 0.001}, std::nullopt, 3) == 2);
    CHECK(linear::select_rank({5.0, 4.9, 0.001}, 1, 3) == 1);
    CHECK_THROWS_AS(linear::select_rank({5.0, 1.0}, 3, 2), schema_error);
    CHECK(linear::select_rank({}, std::nullopt, 0) == 0);
}

TEST_CASE("auto rank matches the declared confounder dimension at large n") {
    auto spec = synth::LinearDGPSpec::confounded_example();
    auto parts = sample_parts(spec, 100000, 77);
    auto fit = linear::fit_icc(parts.y, parts.a, parts.z, parts.w, std::nullopt);
    CHECK(fit.rank_used == 1);
}

TEST_CASE("sandwich covariance degenerates and scales correctly") {
    // Exact linear outcome with no noise: residuals and covariance vanish.
    icc::rng::Rng r(8);
    std::size_t n = 200;
    Matrix z(n, 2), a(n, 1), w(n, 1);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        z(i, 0) = r.normal();
        z(i, 1) = r.normal();
        a(i, 0) = z(i, 0) + 0.5 * z(i, 1) + 0.1 * r.normal();
        w(i, 0) = 0.7 * z(i, 1) + 0.1 * r.normal();
        y[i] = 2.0 * a(i, 0);
    }
    auto exact = linear::fit_icc(y, a, z, w, 0);
    CHECK(std::abs(exact.cov(0, 0)) < 1e-16);

    // Scaling y doubles beta and quadruples its variance.
    auto spec = synth::LinearDGPSpec::confounded_example();
    auto parts = sample_parts(spec, 500, 44);
    auto base = linear::fit_icc(parts.y, parts.a, parts.z, parts.w, 1);
    std::vector<double> y2(parts.y.size());
    for (std::size_t i = 0; i < y2.size(); ++i) y2[i] = 2.0 * parts.y[i];
    auto doubled = linear::fit_icc(y2, parts.a, parts.z, parts.w, 1);
    CHECK(doubled.beta_hat[0] == doctest::Approx(2.0 * base.beta_hat[0]).epsilon(1e-10));
    CHECK(doubled.cov(0, 0) == doctest::Approx(4.0 * base.cov(0, 0)).epsilon(1e-5));

    // The standalone recomputation matches the fit's covariance.
    auto cov = linear::sandwich_cov(base, parts.y, parts.a, parts.z, parts.w);
    CHECK(cov(0, 0) == doctest::Approx(base.cov(0, 0)).epsilon(1e-12));
}

TEST_CASE("baselines: exogenous designs are recovered, collinearity is fatal") {
    auto spec = synth::LinearDGPSpec::confounded_example();
    spec.gamma_a(0, 0) = 0.0;
    spec.gamma_y[0] = 0.0;
    spec.zeta[0] = 0.0;  // no back door through the proxies either
    auto parts = sample_parts(spec, 20000, 15);
    auto tsls = linear::fit_2sls(parts.y, parts.a, parts.z);
    CHECK(std::abs(tsls.coef[0] - 1.0) < 0.05);

    Matrix x(parts.y.size(), 2);
    for (std::size_t i = 0; i < x.rows; ++i) {
        x(i, 0) = parts.a(i, 0);
        x(i, 1) = 2.0 * parts.a(i, 0);  // exact collinearity
    }
    CHECK_THROWS_AS(linear::fit_ols(parts.y, x), identification_error);

    Matrix znarrow(parts.y.size(), 0);
    CHECK_THROWS_AS(linear::fit_2sls(parts.y, parts.a, znarrow), schema_error);
}

TEST_CASE("2SLS stays biased on the confounded design while the proxy fit centers") {
    auto spec = synth::LinearDGPSpec::confounded_example();
    auto parts = sample_parts(spec, 20000, 21);
    auto tsls = linear::fit_2sls(parts.y, parts.a, parts.z);
    CHECK(std::abs(tsls.coef[0] - icc_test::kConfounded2slsBeta) < 0.05);
    auto fit = linear::fit_icc(parts.y, parts.a, parts.z, parts.w, 1);
    CHECK(std::abs(fit.beta_hat[0] - 1.0) < 0.05);
}

TEST_CASE("relevance failure is reported when proxies absorb the instruments") {
    // The instruments move A only through the exact combination that W
    // spans: projecting the proxies out leaves no relevant variation.
    icc::rng::Rng r(9);
    std::size_t n = 300;
    Matrix z(n, 2), a(n, 1), w(n, 1);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        z(i, 0) = r.normal();
        z(i, 1) = r.normal();
        a(i, 0) = z(i, 0) + z(i, 1);
        w(i, 0) = z(i, 0) + z(i, 1);
        y[i] = a(i, 0) + r.normal();
    }
    CHECK_THROWS_AS(linear::fit_icc(y, a, z, w, 1), identification_error);
}
