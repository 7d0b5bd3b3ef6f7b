#ifndef ICC_SIEVE_BRIDGE_HPP
#define ICC_SIEVE_BRIDGE_HPP

#include <string>
#include <vector>

#include "icc/data_model.hpp"
#include "icc/estimators.hpp"
#include "icc/linalg.hpp"

namespace icc::sieve {

// Finite basis for one variable block. Polynomial: powers 1..degree per
// variable plus optional pairwise products. Piecewise linear: the variable
// plus hinge terms at the interior knots.
struct BasisSpec {
    enum class Family { polynomial, piecewise_linear };
    Family family = Family::polynomial;
    std::vector<int> degree;                 // per variable (polynomial)
    std::vector<std::vector<double>> knots;  // per variable (piecewise linear)
    bool interactions = false;
    double ridge = 0.0;

    static BasisSpec poly(std::vector<int> degree, bool interactions = false,
                          double ridge = 0.0);
};

struct FeatureResult {
    linalg::Matrix x;  // n x p, first column is the intercept
    std::vector<std::string> names;
    std::vector<std::string> warnings;
};

FeatureResult build_features(const linalg::Matrix& values, const BasisSpec& spec);

struct SieveFit {
    std::vector<double> theta;
    double moment_residual = 0.0;  // || E_n[c (y - b theta)] ||
    std::size_t rank = 0;          // numerical rank of E_n[c b']
    std::size_t n_bridge_features = 0;
    std::size_t n_instrument_features = 0;
    BasisSpec basis_h;
    std::vector<std::string> warnings;
};

// One-step sieve minimum distance on the instrument moments:
// theta solves E_n[c b'] theta = E_n[c y] in the minimum-norm sense, with an
// optional ridge taken from basis_h.ridge.
SieveFit fit_sieve_bridge(const std::vector<double>& y, const linalg::Matrix& a,
                          const linalg::Matrix& w, const linalg::Matrix& z,
                          const BasisSpec& basis_h, const BasisSpec& basis_z);

// Moment-level entry point: m_cb = E[c b'], c_y = E[c y]. Used for exact
// population-moment checks and for raw feature matrices.
SieveFit fit_sieve_from_moments(const linalg::Matrix& m_cb, const std::vector<double>& c_y,
                                double ridge);

// J = (1/n) sum_i sum_a pi(a) mu(a) * features(a, w_i) . theta for a scalar
// treatment block.
estimators::EstimateReport effect_from_sieve(const SieveFit& fit, const linalg::Matrix& w_sample,
                                             const ContrastSpec& c,
                                             const std::vector<double>& a_data_range = {});

}  // namespace icc::sieve

#endif
