#ifndef ICC_BRIDGE_DISCRETE_HPP
#define ICC_BRIDGE_DISCRETE_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "icc/data_model.hpp"
#include "icc/linalg.hpp"
#include "icc/synth.hpp"

namespace icc::bridge {

// Minimum-norm solution of one bridge linear system together with the
// residual diagnostics that decide its validity.
struct BridgeSolution {
    std::vector<double> coeffs;        // over the bridge's argument cells
    std::vector<std::string> labels;   // one per coefficient
    double residual_norm = 0.0;
    double rhs_scale = 0.0;
    std::size_t nullspace_dim = 0;
    linalg::Matrix nullspace;          // orthonormal columns
    double solve_tol = 0.0;

    bool valid() const;
};

// Minimum-norm least squares for a row system  x * coef = rhs, where coef
// is (n_args x n_conditions). All bridge systems in the discrete model have
// this shape. When cond_weights is nonempty, the conditions are scaled by
// sqrt(weight): consistent systems are unaffected, while inconsistent
// sample systems stop being dominated by near-empty cells.
BridgeSolution solve_row_system(const linalg::Matrix& coef, const std::vector<double>& rhs,
                                double tol,
                                const std::vector<double>& cond_weights = {});

// Observed outcome bridge: H(a,w) stacked over (a, w) cells satisfying
// H * P(A,W | Z) = E[Y | Z]. Columns over zero-mass z cells are dropped.
BridgeSolution solve_outcome_bridge(const synth::LabeledMatrix& p_aw_given_z,
                                    const synth::ConditionalVector& ey_given_z, double tol);

// J = sum_a pi(a) sum_w H(a, w) p(w).
double effect_from_outcome_bridge(const BridgeSolution& sol, const std::vector<double>& p_w,
                                  const ContrastSpec& c, std::size_t d_a, std::size_t d_w);

// Adds magnitude * (random unit combination of null-space columns).
BridgeSolution perturb_nullspace(const BridgeSolution& sol, double magnitude,
                                 std::uint64_t seed);

// First-stage control bridge for one (a, z): tau(z, .) over w1 cells with
// tau * P(W1 | z, W0) = F(a | z, W0).
BridgeSolution solve_tau_cell(const linalg::Matrix& p_w1_given_w0,
                              const std::vector<double>& f_a_given_w0, double tol,
                              const std::vector<double>& w0_weights = {});

// kappa(z, .) over w0 cells with kappa * P(W0 | z, W1) = f(W1)/f(W1 | z).
BridgeSolution solve_kappa_cell(const linalg::Matrix& p_w0_given_w1,
                                const std::vector<double>& density_ratio, double tol,
                                const std::vector<double>& w1_weights = {});

struct ControlQuantityResult {
    double value = 0.0;
    double clip_amount = 0.0;  // how far the raw value sat outside [0, 1]
};

// V(a, z) = sum_w1 tau(z, w1) p(w1), clipped into [0, 1].
ControlQuantityResult control_quantity_from_tau(const BridgeSolution& tau,
                                                const std::vector<double>& p_w1);

// Outcome bridge on one (a, v-bin) cell: h(a, v, .) over w cells with
// h * P(W | a, v, Z) = E[Y | a, v, Z].
BridgeSolution solve_h_cell(const linalg::Matrix& p_w_given_z,
                            const std::vector<double>& ey_given_z, double tol,
                            const std::vector<double>& z_weights = {});

// Action bridge on one (a, v-bin) cell: q(a, v, .) over z cells with
// q * P(Z | a, v, W) = 1 / f(a | v, W). Throws support_error if some
// f(a | v, w) is zero.
BridgeSolution solve_q_cell(const linalg::Matrix& p_z_given_w,
                            const std::vector<double>& f_a_given_vw, double tol,
                            const std::vector<double>& w_weights = {});

// Labeled CSV dump (cell label, coefficient) for inspection.
void write_bridge_csv(std::ostream& os, const BridgeSolution& sol);

}  // namespace icc::bridge

#endif
