#ifndef ICC_PIPELINES_HPP
#define ICC_PIPELINES_HPP

#include <optional>
#include <string>
#include <vector>

#include "icc/data_model.hpp"
#include "icc/estimators.hpp"
#include "icc/linalg.hpp"

namespace icc::pipelines {

// y/A/Z/W matrices pulled out of a dataset by role.
struct LinearParts {
    std::vector<double> y;
    linalg::Matrix a, z, w;
};

LinearParts linear_parts(const Dataset& ds);

// method: icc | icc_cf | icc_2s | 2sls | ols. The ols baseline regresses y
// on (A, W) with an intercept.
estimators::EstimateReport estimate_linear(const Dataset& ds, const std::string& method,
                                           std::optional<std::size_t> rank);

// Discrete outcome-bridge route on categorical (a, z, w) data.
estimators::EstimateReport estimate_discrete_outcome(const Dataset& ds, const ContrastSpec& c,
                                                     double tol);

struct FirstStageReports {
    estimators::EstimateReport ipw, reg, dr;
    double tau_max_residual = 0.0;
    double clip_total = 0.0;
};

// control: bridge (tau/kappa-derived control quantity), empirical
// (first stage free of the confounder), or oracle (recorded v43 column).
FirstStageReports estimate_first_stage(const Dataset& ds, const ContrastSpec& c,
                                       std::size_t n_bins, double tol,
                                       const std::string& control);

estimators::EstimateReport estimate_sieve(const Dataset& ds, const ContrastSpec& c,
                                          int degree_h, int degree_z, double ridge);

}  // namespace icc::pipelines

#endif
