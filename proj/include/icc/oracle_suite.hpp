#ifndef ICC_ORACLE_SUITE_HPP
#define ICC_ORACLE_SUITE_HPP

#include <cstdint>
#include <vector>

#include "icc/bridge_discrete.hpp"
#include "icc/data_model.hpp"
#include "icc/estimators.hpp"
#include "icc/synth.hpp"

namespace icc::suite {

// Outcome-model route at population level: observed bridge solve, effect
// versus the brute-force truth, rank diagnostics, and the latent/observed
// system cross-checks.
struct OutcomeRouteCheck {
    double j_true = 0.0;
    double j_bridge = 0.0;
    double bridge_residual = 0.0;
    std::size_t nullspace_dim = 0;
    std::size_t rank_w = 0;
    std::size_t rank_z = 0;
    bool rank_w_ok = false;  // P(W|U) full column rank
    bool rank_z_ok = false;  // P(A,U|Z) full row rank
    double latent_in_observed_residual = 0.0;
    double observed_in_latent_residual = 0.0;
    bridge::BridgeSolution solution;
};

OutcomeRouteCheck check_outcome_route(const synth::DiscretePopulation& pop,
                                      const ContrastSpec& c, double tol = 1e-8);

// Largest |J(perturbed) - J| over null-space perturbations of the observed
// bridge solution.
double max_nullspace_effect_shift(const synth::DiscretePopulation& pop, const ContrastSpec& c,
                                  const OutcomeRouteCheck& check, std::size_t n_perturbations,
                                  double magnitude, std::uint64_t seed);

enum class ControlSource { oracle_v43, tau_kappa };

// Population rows for a first-stage population, with the control binned
// from the chosen source.
struct FirstStageRows {
    estimators::DiscreteRows rows;
    std::vector<double> control;     // per atom, before binning
    double tau_identity_max_err = 0.0;  // only set for tau_kappa
    double tau_max_residual = 0.0;
    double kappa_max_residual = 0.0;
    bool kappa_all_valid = false;
    double clip_total = 0.0;
};

FirstStageRows first_stage_rows(const synth::FirstStagePopulation& fs, std::size_t n_bins,
                                ControlSource source, double tol = 1e-8);

struct FirstStageCheck {
    double oracle_effect = 0.0;
    double ipw = 0.0;
    double reg = 0.0;
    double dr = 0.0;
    bool bridges_valid = false;
    double h_max_residual = 0.0;
    double q_max_residual = 0.0;
    double tau_identity_max_err = 0.0;
    bool kappa_all_valid = false;
};

FirstStageCheck check_first_stage_route(const synth::FirstStagePopulation& fs,
                                        const ContrastSpec& c, std::size_t n_bins,
                                        ControlSource source, double tol = 1e-8);

// Observed-confounder REG conditioned on (binned oracle V, U) versus
// (binned control quantity V_{4.3}, U).
struct SurrogateCheck {
    double reg_oracle_v = 0.0;
    double reg_v43 = 0.0;
    double identical_bin_mass = 0.0;  // fraction of mass with equal bin labels
};

SurrogateCheck check_surrogate_reg(const synth::FirstStagePopulation& fs,
                                   const ContrastSpec& c, std::size_t n_bins);

// Both displayed bias identities evaluated for random invalid plug-ins.
struct BiasIdentityCheck {
    double max_abs_diff = 0.0;      // max |lhs - rhs| over plug-ins and identities
    double min_rhs_magnitude = 1e300;  // smallest |rhs| (identities should be nonzero)
    double valid_plugin_max_bias = 0.0;  // |lhs| when the plug-in is the valid bridge
};

BiasIdentityCheck check_bias_identities(const synth::FirstStagePopulation& fs,
                                        const ContrastSpec& c, std::size_t n_bins,
                                        std::size_t n_plugins, std::uint64_t seed,
                                        double tol = 1e-8);

// Default two-point contrast on fully supported treatment values.
ContrastSpec default_first_stage_contrast(const synth::FirstStagePopulation& fs,
                                          std::size_t n_bins);

}  // namespace icc::suite

#endif
