#ifndef ICC_SYNTH_HPP
#define ICC_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "icc/data_model.hpp"
#include "icc/linalg.hpp"

namespace icc::synth {

enum class Axis { U, Z, A, W };

const char* axis_name(Axis axis);

// Conditional probability matrix with labeled row/column cells. Rows index
// the target cells (row-major over the target axes), columns the
// conditioning cells. Columns over zero-mass conditioning cells are flagged
// undefined rather than throwing.
struct LabeledMatrix {
    std::vector<Axis> row_axes;
    std::vector<Axis> col_axes;
    std::vector<std::size_t> row_dims;
    std::vector<std::size_t> col_dims;
    linalg::Matrix m;
    std::vector<bool> col_defined;

    std::string row_label(std::size_t i) const;
    std::string col_label(std::size_t j) const;
};

// Vector of conditional expectations with per-cell definedness flags.
struct ConditionalVector {
    std::vector<double> values;
    std::vector<bool> defined;
};

// Exact joint distribution over discrete (U, Z, A, W) with a structural
// outcome-mean table; the brute-force oracle for the outcome-model route.
struct DiscretePopulation {
    std::size_t d_u = 0, d_z = 0, d_a = 0, d_w = 0;
    std::vector<double> p;   // joint mass, index ((u*d_z+z)*d_a+a)*d_w+w
    std::vector<double> k0;  // structural mean, index a*d_u+u
    double y_noise_sd = 0.0;

    double prob(std::size_t u, std::size_t z, std::size_t a, std::size_t w) const {
        return p[((u * d_z + z) * d_a + a) * d_w + w];
    }
    double& prob(std::size_t u, std::size_t z, std::size_t a, std::size_t w) {
        return p[((u * d_z + z) * d_a + a) * d_w + w];
    }
    double k0_at(std::size_t a, std::size_t u) const { return k0[a * d_u + u]; }

    void validate() const;
    std::vector<double> marginal(Axis axis) const;
    ConditionalVector ey_given_z() const;
};

// Dirichlet-random population. The joint is sampled as the product
// p(u) p(z|u) p(a|z,u) p(w|u) so the simple common-confounding conditional
// independences hold exactly; each conditional block is floored at
// support_floor and renormalized.
DiscretePopulation random_population(std::size_t d_u, std::size_t d_z, std::size_t d_a,
                                     std::size_t d_w, std::uint64_t seed,
                                     double support_floor = 1e-4);

// J = sum_u p(u) sum_a pi(a) k0(a, u), exact over the tensor.
double true_J(const DiscretePopulation& pop, const ContrastSpec& c);

LabeledMatrix cond_matrix(const DiscretePopulation& pop, const std::vector<Axis>& target,
                          const std::vector<Axis>& given);

struct RankResult {
    std::size_t rank = 0;
    bool full_column_rank = false;
};

RankResult completeness_rank(const linalg::Matrix& m, double tol);
RankResult completeness_rank(const LabeledMatrix& m, double tol);

Dataset sample_discrete(const DiscretePopulation& pop, std::size_t n, std::uint64_t seed);

// Linear structural model:
//   Z ~ N(0, sigma_z);  U = Z gtz + e_u;  A = Z pi + U ga + e_a;
//   W = U gw + e_w;     Y = A beta + U gy + W zeta + e_y.
struct LinearDGPSpec {
    std::size_t d_a = 1, d_u = 1, d_z = 2, d_w = 1;
    std::vector<double> beta;        // d_a
    std::vector<double> gamma_y;     // d_u
    linalg::Matrix gamma_a;          // d_u x d_a
    linalg::Matrix gamma_w;          // d_u x d_w
    std::vector<double> zeta;        // d_w
    linalg::Matrix pi_fs;            // d_z x d_a
    linalg::Matrix gamma_tilde_z;    // d_z x d_u
    linalg::Matrix sigma_z;          // d_z x d_z
    linalg::Matrix noise_cov;        // (1 + d_a + d_w + d_u)^2, order (e_y, e_a, e_w, e_u)

    void validate() const;

    // beta = 1, all gamma loadings 1, zeta = 0.5, pi = (1, 0.5)',
    // gamma_tilde_z = (0.3, -0.2)', unit independent noise, Z ~ N(0, I2).
    // Strongly confounded: population 2SLS is biased, the proxy-projected
    // estimator is exact.
    static LinearDGPSpec confounded_example();
};

Dataset sample_linear(const LinearDGPSpec& spec, std::size_t n, std::uint64_t seed);

// Strictly monotone first-stage population. The treatment is
// A = h(Z, m(U, eta)) with h and m tabulated on a finite eta grid and
// exhaustively checked to be strictly increasing. The disturbance eta sits
// on a shared quantile grid; its conditional distribution given U is the
// row of eta_weights (uniform by default).
struct FirstStagePopulation {
    std::size_t d_u = 0, d_z = 0, d_w0 = 0, d_w1 = 0;
    std::vector<double> p;  // joint over (u, z, w0, w1)
    std::size_t n_grid = 0;
    std::vector<double> eta_grid;    // increasing
    linalg::Matrix eta_weights;      // d_u x n_grid, rows sum to 1
    linalg::Matrix m_form;           // d_u x n_grid, strictly increasing per row
    std::vector<double> m_levels;    // sorted distinct values of m_form
    linalg::Matrix h_form;           // d_z x m_levels.size(), strictly increasing per row
    std::vector<double> a_levels;    // sorted distinct values of h_form
    std::vector<double> k0v;         // outcome mean, index (ai*n_grid + g)*d_u + u
    double y_noise_sd = 0.0;

    double joint(std::size_t u, std::size_t z, std::size_t w0, std::size_t w1) const {
        return p[((u * d_z + z) * d_w0 + w0) * d_w1 + w1];
    }

    void validate() const;

    std::size_t m_level_index(double m) const;
    std::size_t a_level_index(double a) const;  // exact match or throws
    bool has_a_level(double a) const;
    double a_code(std::size_t u, std::size_t z, std::size_t g) const;
    double k0v_at(std::size_t a_idx, std::size_t g, std::size_t u) const {
        return k0v[(a_idx * n_grid + g) * d_u + u];
    }

    std::vector<double> marginal_u() const;
    std::vector<double> marginal_z() const;
    // Midpoint conditional CDF of A at value a given (z, u):
    // P(A < a | z, u) + 0.5 P(A = a | z, u).
    double f_mid(double a, std::size_t z, std::size_t u) const;
    double oracle_v(std::size_t u, std::size_t z, std::size_t g) const;
    // V_{4.3}: the U-averaged conditional CDF at (a, z).
    double control_quantity_value(double a, std::size_t z) const;

    // Brute-force J over (u, eta) and the contrast arms.
    double oracle_effect(const ContrastSpec& c) const;

    // Treatment values a with f(a | v-block, u) > 0 for every equal-mass
    // eta block and every u; contrast arms must come from this set for the
    // common-support assumption to hold.
    std::vector<double> fully_supported_values(std::size_t n_blocks) const;
};

// Precomputed lookups over a first-stage population: treatment level per
// (u, z, g) atom, the oracle control per atom, and the control quantity
// V_{4.3} per (treatment level, z).
struct FirstStageTables {
    std::vector<std::size_t> a_idx;  // (u*d_z + z)*n_grid + g -> a level
    std::vector<double> v_oracle;    // same indexing
    linalg::Matrix v43;              // a_levels.size() x d_z
};

FirstStageTables first_stage_tables(const FirstStagePopulation& fs);

struct MonotoneFixtureSpec {
    std::size_t d_u = 2;
    std::size_t d_w0 = 3;
    std::size_t d_w1 = 3;
    std::size_t n_grid = 105;
    std::size_t n_blocks = 21;   // must divide n_grid
    std::size_t t_levels = 25;   // h-shift levels; d_z = t_levels * d_u
    double weight_amplitude = 0.2;
    double support_floor = 1e-3;
    double y_noise_sd = 0.0;
    std::uint64_t seed = 11;
};

// Deterministic first-stage population used by the population-level
// invariant suite. The confounder shifts the eta distribution (eta_weights)
// while the p(u)-mixture of the rows stays exactly uniform, and outcome
// means are constant on eta blocks, so the equal-mass binned controls align
// exactly with the blocks.
FirstStagePopulation monotone_population(const MonotoneFixtureSpec& spec);

Dataset sample_monotone(const FirstStagePopulation& fs, std::size_t n, std::uint64_t seed);

}  // namespace icc::synth

#endif
