#ifndef ICC_LINEAR_ICC_HPP
#define ICC_LINEAR_ICC_HPP

#include <optional>
#include <vector>

#include "icc/linalg.hpp"

namespace icc::linear {

// Fit of the proxy-projected linear IV estimator
//   beta = (A' M_What P_Z A)^{-1} (A' M_What P_Z Y)
// where What = P_Z W reduced to its top-r singular subspace.
struct LinearICCFit {
    std::vector<double> beta_hat;         // d_a
    std::vector<double> delta_hat;        // r, slope on the projected proxy basis
    linalg::Matrix cov;                   // (d_a + r)^2 robust sandwich
    std::size_t rank_used = 0;
    std::vector<double> residuals;        // y - A beta - What_r delta
    std::vector<double> singular_values;  // of P_Z W
};

// Rank of the projected proxy block: the declared confounder dimension when
// given, otherwise the count of singular values above max(sigma) * rel_gap.
std::size_t select_rank(const std::vector<double>& singular_values,
                        std::optional<std::size_t> declared, std::size_t max_rank,
                        double rel_gap = 1e-3);

// Matrices are n x d (row-major); y has length n. rank = declared d_U or
// nullopt for the automatic gap rule.
LinearICCFit fit_icc(const std::vector<double>& y, const linalg::Matrix& a,
                     const linalg::Matrix& z, const linalg::Matrix& w,
                     std::optional<std::size_t> rank);

// Numerically equivalent control-function form: OLS of y on
// (A, A - Z pihat, What_r), taking the slope on A.
LinearICCFit fit_icc_control_form(const std::vector<double>& y, const linalg::Matrix& a,
                                  const linalg::Matrix& z, const linalg::Matrix& w,
                                  std::optional<std::size_t> rank);

// Explicit two-stage route: OLS of y on (P_Z A, What_r).
LinearICCFit fit_icc_two_stage(const std::vector<double>& y, const linalg::Matrix& a,
                               const linalg::Matrix& z, const linalg::Matrix& w,
                               std::optional<std::size_t> rank);

// Heteroskedasticity-robust plug-in of the asymptotic variance, recomputed
// from a fit and the data that produced it.
linalg::Matrix sandwich_cov(const LinearICCFit& fit, const std::vector<double>& y,
                            const linalg::Matrix& a, const linalg::Matrix& z,
                            const linalg::Matrix& w);

struct OlsFit {
    std::vector<double> coef;
    linalg::Matrix cov;  // HC0 sandwich
    std::vector<double> residuals;
};

OlsFit fit_ols(const std::vector<double>& y, const linalg::Matrix& x);
OlsFit fit_2sls(const std::vector<double>& y, const linalg::Matrix& a,
                const linalg::Matrix& z);

// Second-moment matrix of the mean-zero stack (y, A, Z, W); lets every fit
// above run on exact population covariance algebra instead of data.
struct PopulationMoments {
    std::size_t d_a = 0, d_z = 0, d_w = 0;
    linalg::Matrix m;  // (1 + d_a + d_z + d_w)^2
};

struct PopulationFit {
    std::vector<double> beta;
    std::vector<double> delta;
    std::size_t rank_used = 0;
    std::vector<double> singular_values_sq;  // eigenvalues of the projected proxy Gram
};

PopulationFit population_fit_icc(const PopulationMoments& pm, std::optional<std::size_t> rank);
std::vector<double> population_fit_2sls(const PopulationMoments& pm);

}  // namespace icc::linear

#endif
