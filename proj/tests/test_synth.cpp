#include <doctest.h>

#include <cmath>
#include <map>

#include "icc/config_json.hpp"
#include "icc/errors.hpp"
#include "icc/synth.hpp"

#include "support/linear_moment_oracle.hpp"

using namespace icc;
using synth::Axis;

namespace {

// Independent brute-force oracle: full tensor sum, written against the
// definition rather than the marginal shortcut in true_J.
double brute_force_effect(const synth::DiscretePopulation& pop, const ContrastSpec& c) {
    double total = 0.0;
    for (std::size_t u = 0; u < pop.d_u; ++u)
        for (std::size_t z = 0; z < pop.d_z; ++z)
            for (std::size_t a = 0; a < pop.d_a; ++a)
                for (std::size_t w = 0; w < pop.d_w; ++w) {
                    double mass = pop.prob(u, z, a, w);
                    for (std::size_t j = 0; j < c.support.size(); ++j) {
                        auto arm = static_cast<std::size_t>(c.support[j]);
                        total += mass * c.weights[j] * pop.k0_at(arm, u);
                    }
                }
    return total;
}

synth::DiscretePopulation uniform_population(std::size_t d_u, std::size_t d_z,
                                             std::size_t d_a, std::size_t d_w) {
    synth::DiscretePopulation pop;
    pop.d_u = d_u;
    pop.d_z = d_z;
    pop.d_a = d_a;
    pop.d_w = d_w;
    pop.p.assign(d_u * d_z * d_a * d_w, 1.0 / static_cast<double>(d_u * d_z * d_a * d_w));
    pop.k0.assign(d_a * d_u, 0.0);
    for (std::size_t a = 0; a < d_a; ++a)
        for (std::size_t u = 0; u < d_u; ++u) pop.k0[a * d_u + u] = static_cast<double>(a);
    return pop;
}

}  // namespace

TEST_CASE("random populations are normalized and deterministic in the seed") {
    auto pop = synth::random_population(2, 4, 2, 3, 7);
    pop.validate();
    double total = 0.0;
    for (double v : pop.p) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-13));

    auto again = synth::random_population(2, 4, 2, 3, 7);
    CHECK(pop.p == again.p);
    CHECK(pop.k0 == again.k0);

    auto other = synth::random_population(2, 4, 2, 3, 8);
    CHECK(pop.p != other.p);
}

TEST_CASE("support floor keeps conditionals away from zero") {
    auto floored = synth::random_population(2, 4, 2, 3, 7, 1e-3);
    double min_mass = 1.0;
    for (double v : floored.p) min_mass = std::min(min_mass, v);
    // Joint mass is a product of floored conditionals, so it cannot vanish.
    CHECK(min_mass > 1e-12);
    CHECK_NOTHROW(synth::random_population(2, 4, 2, 3, 7, 0.0));
    CHECK_THROWS_AS(synth::random_population(2, 4, 2, 3, 7, 0.4), schema_error);
}

TEST_CASE("true_J on a linear structural table is the ATE of the codes") {
    auto pop = uniform_population(2, 3, 2, 2);  // k0(a, u) = a
    CHECK(synth::true_J(pop, ate_contrast(1, 0)) == doctest::Approx(1.0).epsilon(1e-14));

    ContrastSpec zero;
    zero.support = {0.0, 1.0};
    zero.weights = {0.0, 0.0};
    CHECK(synth::true_J(pop, zero) == 0.0);

    CHECK_THROWS_AS(synth::true_J(pop, ate_contrast(2, 0)), schema_error);
}

TEST_CASE("true_J matches the independent tensor-sum oracle") {
    auto pop = synth::random_population(2, 4, 2, 3, 7);
    ContrastSpec c = ate_contrast(1, 0);
    CHECK(synth::true_J(pop, c) ==
          doctest::Approx(brute_force_effect(pop, c)).epsilon(1e-13));
    // Linearity in the contrast.
    ContrastSpec minus = ate_contrast(0, 1);
    CHECK(synth::true_J(pop, c) + synth::true_J(pop, minus) ==
          doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("conditional matrices normalize and label cells") {
    auto pop = uniform_population(2, 3, 2, 2);
    auto p_w_u = synth::cond_matrix(pop, {Axis::W}, {Axis::U});
    REQUIRE(p_w_u.m.rows == 2);
    REQUIRE(p_w_u.m.cols == 2);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(p_w_u.m(i, j) == doctest::Approx(0.5).epsilon(1e-14));

    auto pop7 = synth::random_population(2, 4, 2, 3, 7);
    auto p_aw_z = synth::cond_matrix(pop7, {Axis::A, Axis::W}, {Axis::Z});
    REQUIRE(p_aw_z.m.rows == 6);
    REQUIRE(p_aw_z.m.cols == 4);
    for (std::size_t z = 0; z < 4; ++z) {
        CHECK(p_aw_z.col_defined[z]);
        double colsum = 0.0;
        for (std::size_t r = 0; r < 6; ++r) colsum += p_aw_z.m(r, z);
        CHECK(colsum == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(p_aw_z.row_label(1) == "a0,w1");
    CHECK(p_aw_z.col_label(2) == "z2");

    CHECK_THROWS_AS(synth::cond_matrix(pop7, {Axis::W}, {Axis::W}), schema_error);
}

TEST_CASE("zero-mass conditioning cells are flagged, not fatal") {
    auto pop = uniform_population(2, 3, 2, 2);
    // Remove all mass on z = 2 and renormalize.
    for (std::size_t u = 0; u < 2; ++u)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t w = 0; w < 2; ++w) pop.prob(u, 2, a, w) = 0.0;
    double total = 0.0;
    for (double v : pop.p) total += v;
    for (auto& v : pop.p) v /= total;

    auto p_w_z = synth::cond_matrix(pop, {Axis::W}, {Axis::Z});
    CHECK(p_w_z.col_defined[0]);
    CHECK(p_w_z.col_defined[1]);
    CHECK_FALSE(p_w_z.col_defined[2]);
    auto ey = pop.ey_given_z();
    CHECK_FALSE(ey.defined[2]);
}

TEST_CASE("completeness rank against a determinant oracle") {
    linalg::Matrix eye = linalg::Matrix::identity(3);
    auto r = synth::completeness_rank(eye, 1e-10);
    CHECK(r.rank == 3);
    CHECK(r.full_column_rank);

    linalg::Matrix flat(2, 2, 0.25);
    auto r1 = synth::completeness_rank(flat, 1e-10);
    CHECK(r1.rank == 1);
    CHECK_FALSE(r1.full_column_rank);

    // W tracks U with asymmetric noise: the 2x2 conditional matrix has a
    // nonzero determinant, so full column rank.
    linalg::Matrix p_w_u(2, 2);
    p_w_u(0, 0) = 0.9;
    p_w_u(1, 0) = 0.1;
    p_w_u(0, 1) = 0.2;
    p_w_u(1, 1) = 0.8;
    double det = p_w_u(0, 0) * p_w_u(1, 1) - p_w_u(0, 1) * p_w_u(1, 0);
    auto r2 = synth::completeness_rank(p_w_u, 1e-10);
    CHECK(r2.full_column_rank == (std::abs(det) > 1e-12));

    CHECK_THROWS_AS(synth::completeness_rank(linalg::Matrix(), 1e-10), schema_error);
}

TEST_CASE("sample_discrete is reproducible and noiseless outcomes equal k0") {
    auto pop = synth::random_population(2, 4, 2, 3, 7);
    Dataset ds = synth::sample_discrete(pop, 500, 123);
    Dataset again = synth::sample_discrete(pop, 500, 123);
    CHECK(ds.at("y").values == again.at("y").values);
    CHECK(ds.at("a").values == again.at("a").values);

    for (std::size_t i = 0; i < ds.n(); ++i) {
        auto a = static_cast<std::size_t>(ds.at("a").values[i]);
        auto u = static_cast<std::size_t>(ds.at("u").values[i]);
        CHECK(ds.at("y").values[i] == pop.k0_at(a, u));
    }
}

TEST_CASE("empirical P(A,W|Z) converges to the population conditional") {
    auto pop = synth::random_population(2, 4, 2, 3, 7);
    Dataset ds = synth::sample_discrete(pop, 100000, 5);
    auto p_aw_z = synth::cond_matrix(pop, {Axis::A, Axis::W}, {Axis::Z});

    std::map<int, std::map<int, double>> counts;
    std::map<int, double> z_counts;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        int z = static_cast<int>(ds.at("z").values[i]);
        int cell = static_cast<int>(ds.at("a").values[i]) * 3 +
                   static_cast<int>(ds.at("w").values[i]);
        counts[z][cell] += 1.0;
        z_counts[z] += 1.0;
    }
    double worst_tv = 0.0;
    for (std::size_t z = 0; z < 4; ++z) {
        double tv = 0.0;
        for (std::size_t cell = 0; cell < 6; ++cell) {
            double emp = counts[static_cast<int>(z)][static_cast<int>(cell)] /
                         z_counts[static_cast<int>(z)];
            tv += std::abs(emp - p_aw_z.m(cell, z));
        }
        worst_tv = std::max(worst_tv, 0.5 * tv);
    }
    CHECK(worst_tv < 0.02);
}

TEST_CASE("linear sampler matches the covariance oracle at large n") {
    auto spec = synth::LinearDGPSpec::confounded_example();
    Dataset ds = synth::sample_linear(spec, 1000000, 77);
    auto pm = icc_test::moment_oracle(spec);

    // Stack sample columns in the same (y, a, z1, z2, w1) order.
    std::vector<const std::vector<double>*> cols = {
        &ds.at("y").values, &ds.at("a").values, &ds.at("z1").values, &ds.at("z2").values,
        &ds.at("w1").values};
    for (std::size_t i = 0; i < cols.size(); ++i)
        for (std::size_t j = i; j < cols.size(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < ds.n(); ++k) acc += (*cols[i])[k] * (*cols[j])[k];
            acc /= static_cast<double>(ds.n());
            CHECK(std::abs(acc - pm.m(i, j)) < 1e-2);
        }
}

TEST_CASE("linear sampler is deterministic and validates its parameters") {
    auto spec = synth::LinearDGPSpec::confounded_example();
    Dataset a = synth::sample_linear(spec, 50, 3);
    Dataset b = synth::sample_linear(spec, 50, 3);
    CHECK(a.at("y").values == b.at("y").values);

    spec.noise_cov(0, 1) = 0.9;  // asymmetric
    CHECK_THROWS_AS(synth::sample_linear(spec, 10, 1), config_error);
}

TEST_CASE("monotone population validates and rejects broken monotonicity") {
    synth::MonotoneFixtureSpec spec;
    spec.seed = 11;
    auto fs = synth::monotone_population(spec);
    CHECK_NOTHROW(fs.validate());
    CHECK(fs.d_z == spec.t_levels * spec.d_u);

    auto broken = fs;
    std::swap(broken.h_form(0, 3), broken.h_form(0, 4));
    CHECK_THROWS_AS(broken.validate(), schema_error);

    auto broken_m = fs;
    std::swap(broken_m.m_form(0, 10), broken_m.m_form(0, 11));
    CHECK_THROWS_AS(broken_m.validate(), schema_error);
}

TEST_CASE("oracle control values are the running midpoint CDF") {
    synth::MonotoneFixtureSpec spec;
    spec.seed = 11;
    auto fs = synth::monotone_population(spec);
    auto tab = synth::first_stage_tables(fs);

    for (std::size_t u = 0; u < fs.d_u; ++u) {
        for (std::size_t z : {std::size_t{0}, fs.d_z - 1}) {
            double mean = 0.0;
            double prev = -1.0;
            for (std::size_t g = 0; g < fs.n_grid; ++g) {
                double v = tab.v_oracle[(u * fs.d_z + z) * fs.n_grid + g];
                CHECK(v > prev);  // strictly increasing in eta
                CHECK(v > 0.0);
                CHECK(v < 1.0);
                CHECK(v == doctest::Approx(fs.oracle_v(u, z, g)).epsilon(1e-12));
                mean += fs.eta_weights(u, g) * v;
                prev = v;
            }
            // Probability-integral-transform mean is exactly one half.
            CHECK(mean == doctest::Approx(0.5).epsilon(1e-12));
        }
    }
}

TEST_CASE("control quantity is strictly increasing in eta within every u cell") {
    synth::MonotoneFixtureSpec spec;
    spec.seed = 12;
    spec.d_u = 3;
    spec.d_w0 = 4;
    spec.d_w1 = 4;
    auto fs = synth::monotone_population(spec);
    auto tab = synth::first_stage_tables(fs);
    for (std::size_t u = 0; u < fs.d_u; ++u)
        for (std::size_t z : {std::size_t{0}, fs.d_z / 2}) {
            double prev = -1.0;
            for (std::size_t g = 0; g < fs.n_grid; ++g) {
                double v43 = tab.v43(tab.a_idx[(u * fs.d_z + z) * fs.n_grid + g], z);
                CHECK(v43 > prev);
                prev = v43;
            }
        }
}

TEST_CASE("sample_monotone records oracle controls; d_U=1 collapses them") {
    synth::MonotoneFixtureSpec spec;
    spec.seed = 11;
    spec.d_u = 1;
    spec.d_w0 = 2;
    spec.d_w1 = 2;
    auto fs = synth::monotone_population(spec);
    Dataset ds = synth::sample_monotone(fs, 400, 9);
    for (std::size_t i = 0; i < ds.n(); ++i)
        CHECK(ds.at("v_oracle").values[i] ==
              doctest::Approx(ds.at("v43_oracle").values[i]).epsilon(1e-12));

    Dataset again = synth::sample_monotone(fs, 400, 9);
    CHECK(ds.at("a").values == again.at("a").values);
}

TEST_CASE("generator specs round-trip through the config format") {
    config::DgpSpec spec;
    spec.kind = config::DgpSpec::Kind::discrete;
    spec.discrete.d_u = 3;
    spec.discrete.d_z = 7;
    spec.discrete.seed = 42;
    config::DgpSpec back = config::parse_dgp(config::dgp_to_json(spec));
    auto pop = synth::random_population(spec.discrete.d_u, spec.discrete.d_z,
                                        spec.discrete.d_a, spec.discrete.d_w,
                                        spec.discrete.seed, spec.discrete.support_floor);
    auto pop_back = synth::random_population(back.discrete.d_u, back.discrete.d_z,
                                             back.discrete.d_a, back.discrete.d_w,
                                             back.discrete.seed, back.discrete.support_floor);
    CHECK(pop.p == pop_back.p);

    config::DgpSpec lin;
    lin.kind = config::DgpSpec::Kind::linear;
    lin.linear = synth::LinearDGPSpec::confounded_example();
    config::DgpSpec lin_back = config::parse_dgp(config::dgp_to_json(lin));
    CHECK(lin_back.linear.beta == lin.linear.beta);
    CHECK(lin_back.linear.gamma_tilde_z.data == lin.linear.gamma_tilde_z.data);

    config::DgpSpec mono;
    mono.kind = config::DgpSpec::Kind::monotone;
    mono.monotone.seed = 13;
    mono.monotone.d_u = 3;
    mono.monotone.d_w0 = 4;
    mono.monotone.d_w1 = 4;
    config::DgpSpec mono_back = config::parse_dgp(config::dgp_to_json(mono));
    auto fs = synth::monotone_population(mono.monotone);
    auto fs_back = synth::monotone_population(mono_back.monotone);
    CHECK(fs.p == fs_back.p);
    CHECK(fs.k0v == fs_back.k0v);
}

TEST_CASE("fully supported treatment values cover every block for every u") {
    synth::MonotoneFixtureSpec spec;
    spec.seed = 13;
    auto fs = synth::monotone_population(spec);
    auto supported = fs.fully_supported_values(spec.n_blocks);
    CHECK(!supported.empty());
    // Values in [5*(n_blocks-1), 5*(t_levels-1)+4] by the shift construction.
    for (double a : supported) {
        CHECK(a >= 5.0 * (spec.n_blocks - 1));
        CHECK(a <= 5.0 * (spec.t_levels - 1) + 4.0);
    }
    CHECK(supported.size() >= 2);
}
