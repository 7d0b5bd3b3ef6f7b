#ifndef ICC_ESTIMATORS_HPP
#define ICC_ESTIMATORS_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "icc/bridge_discrete.hpp"
#include "icc/data_model.hpp"
#include "icc/synth.hpp"

namespace icc::estimators {

struct EstimateReport {
    double j_hat = 0.0;
    std::optional<double> se;  // only the linear estimators report one
    std::string estimator;
    std::size_t n_used = 0;
    std::vector<std::pair<std::string, double>> diagnostics;
};

// Weighted rows shared by population mode (atoms with exact masses, y the
// conditional mean) and sample mode (observations with weight 1/n). Every
// moment function below runs on this one representation.
struct DiscreteRows {
    std::vector<double> weight;
    std::vector<double> y;
    std::vector<double> a;      // treatment values
    std::vector<int> vbin;      // control bin; all zero when no control is used
    std::vector<int> z;         // instrument cell, -1 if unavailable
    std::vector<int> w;         // proxy cell, -1 if unavailable
    std::vector<int> u;         // latent confounder cell, -1 if unavailable
    int n_vbins = 1;
    int n_z = 0;
    int n_w = 0;
    int n_u = 0;

    std::size_t n() const { return weight.size(); }
    void validate() const;
};

DiscreteRows rows_from_population(const synth::DiscretePopulation& pop);
DiscreteRows rows_from_dataset(const Dataset& ds);

// Coefficient tables over (arm, v-bin) cells. h tables hold coefficients
// over proxy cells, q tables over instrument cells.
struct CellBridgeTable {
    std::size_t n_arms = 0;
    std::size_t n_vbins = 0;
    std::size_t n_cells = 0;
    std::vector<double> coef;       // ((arm * n_vbins + v) * n_cells + cell)
    std::vector<std::uint8_t> cell_defined;  // same indexing
    std::vector<std::uint8_t> cell_valid;    // per (arm, v)
    double max_residual = 0.0;

    double at(std::size_t arm, std::size_t v, std::size_t cell) const {
        return coef[(arm * n_vbins + v) * n_cells + cell];
    }
    bool all_valid() const;
};

struct TildeBridges {
    std::vector<double> arms;  // contrast support with nonzero weight
    CellBridgeTable h;
    CellBridgeTable q;
    std::vector<bridge::BridgeSolution> h_solutions;  // per (arm, vbin), row-major
    std::vector<bridge::BridgeSolution> q_solutions;
};

// Solves the per-(arm, v-bin) outcome and action bridge systems from the
// rows' frequency (or exact population) tables. Throws support_error on an
// empty (arm, v-bin) cell or a zero generalised propensity.
TildeBridges solve_tilde_bridges(const DiscreteRows& rows, const ContrastSpec& c, double tol);

// Moment-function evaluators; no validity checks, used for the bias
// identities and double-robustness probes.
double eval_tilde_ipw(const DiscreteRows& rows, const TildeBridges& b,
                      const CellBridgeTable& q, const ContrastSpec& c);
double eval_tilde_reg(const DiscreteRows& rows, const TildeBridges& b,
                      const CellBridgeTable& h, const ContrastSpec& c);
double eval_tilde_dr(const DiscreteRows& rows, const TildeBridges& b,
                     const CellBridgeTable& h, const CellBridgeTable& q,
                     const ContrastSpec& c);

// Public estimators: require valid bridge solutions.
EstimateReport tilde_phi_ipw(const DiscreteRows& rows, const TildeBridges& b,
                             const ContrastSpec& c);
EstimateReport tilde_phi_reg(const DiscreteRows& rows, const TildeBridges& b,
                             const ContrastSpec& c);
EstimateReport tilde_phi_dr(const DiscreteRows& rows, const TildeBridges& b,
                            const ContrastSpec& c);

// Observed-confounder estimators on (v-bin, u) cells; oracle mode for
// simulated data. Propensities and cell means come from the rows unless a
// propensity table indexed (arm, vbin, u) is supplied.
struct PhiOptions {
    const std::vector<double>* propensity = nullptr;
};

EstimateReport phi_ipw(const DiscreteRows& rows, const ContrastSpec& c, PhiOptions opt = {});
EstimateReport phi_reg(const DiscreteRows& rows, const ContrastSpec& c, PhiOptions opt = {});
EstimateReport phi_dr(const DiscreteRows& rows, const ContrastSpec& c, PhiOptions opt = {});

struct IdentityPair {
    double lhs = 0.0;
    double rhs = 0.0;
};

// Population bias identity for an arbitrary action-bridge plug-in q:
//   E[phi~_IPW(q)] - J  =  E[h0 * E[pi(A)(q - 1/f(A|V,W)) | A,V,W]]
// with h0 a valid observed outcome bridge.
IdentityPair bias_identity_ipw(const DiscreteRows& rows, const TildeBridges& b,
                               const CellBridgeTable& q_plugin, const ContrastSpec& c,
                               double j_true);

// Population bias identity for an arbitrary outcome-bridge plug-in h:
//   E[phi~_REG(h)] - J  =  E[pi(A) q0 * E[h - Y | A,V,Z]]
// with q0 a valid observed action bridge.
IdentityPair bias_identity_reg(const DiscreteRows& rows, const TildeBridges& b,
                               const CellBridgeTable& h_plugin, const ContrastSpec& c,
                               double j_true);

struct McRow {
    std::string estimator;
    double mean = 0.0;
    double bias = 0.0;
    double sd = 0.0;
    double rmse = 0.0;
    std::optional<double> coverage;
    std::optional<double> mean_se;  // average reported standard error
    std::size_t r_completed = 0;
    std::size_t failures = 0;
};

struct McTable {
    double truth = 0.0;
    std::size_t replications = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::vector<McRow> rows;
};

// One replication: estimates (and optional standard errors) per estimator,
// in the same order as the estimator list. Missing value = failure.
using McReplication =
    std::vector<std::optional<std::pair<double, std::optional<double>>>>;

McTable run_mc(const std::vector<std::string>& estimator_names, double truth, std::size_t R,
               std::size_t n, std::uint64_t seed,
               const std::function<McReplication(std::uint64_t rep_seed)>& replicate);

void write_mc_csv(std::ostream& os, const McTable& t);
void write_mc_markdown(std::ostream& os, const McTable& t);

}  // namespace icc::estimators

#endif
