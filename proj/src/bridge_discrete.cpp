#include "icc/bridge_discrete.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "icc/errors.hpp"
#include "icc/rng.hpp"

namespace icc::bridge {

namespace {
// Scale floor so that an identically-zero right-hand side still accepts an
// exact solution.
constexpr double kScaleFloor = 1e-30;
}  // namespace

bool BridgeSolution::valid() const {
    return residual_norm <= solve_tol * std::max(rhs_scale, kScaleFloor);
}

BridgeSolution solve_row_system(const linalg::Matrix& coef, const std::vector<double>& rhs,
                                double tol, const std::vector<double>& cond_weights) {
    if (coef.empty()) throw schema_error("bridge system: empty coefficient matrix");
    if (coef.cols != rhs.size())
        throw schema_error("bridge system: rhs length does not match conditioning cells");
    if (!cond_weights.empty() && cond_weights.size() != rhs.size())
        throw schema_error("bridge system: condition weight length mismatch");

    linalg::Matrix system = linalg::transpose(coef);
    std::vector<double> b = rhs;
    if (!cond_weights.empty()) {
        double total = 0.0;
        for (double w : cond_weights) {
            if (w < 0.0) throw schema_error("bridge system: negative condition weight");
            total += w;
        }
        if (total <= 0.0) throw schema_error("bridge system: zero condition weights");
        for (std::size_t j = 0; j < b.size(); ++j) {
            double d = std::sqrt(cond_weights[j] / total);
            b[j] *= d;
            for (std::size_t i = 0; i < system.cols; ++i) system(j, i) *= d;
        }
    }

    linalg::LstsqResult ls = linalg::lstsq_min_norm(system, b, 1e-10);
    BridgeSolution sol;
    sol.coeffs = std::move(ls.x);
    sol.residual_norm = ls.residual_norm;
    sol.rhs_scale = linalg::norm2(b);
    sol.nullspace = std::move(ls.nullspace);
    sol.nullspace_dim = sol.nullspace.cols;
    sol.solve_tol = tol;
    return sol;
}

BridgeSolution solve_outcome_bridge(const synth::LabeledMatrix& p_aw_given_z,
                                    const synth::ConditionalVector& ey_given_z, double tol) {
    if (p_aw_given_z.row_axes != std::vector<synth::Axis>{synth::Axis::A, synth::Axis::W})
        throw schema_error("solve_outcome_bridge: matrix rows must be (a, w) cells");
    if (p_aw_given_z.col_axes != std::vector<synth::Axis>{synth::Axis::Z})
        throw schema_error("solve_outcome_bridge: matrix columns must be z cells");
    if (ey_given_z.values.size() != p_aw_given_z.m.cols)
        throw schema_error("solve_outcome_bridge: E[Y|Z] length does not match z cells");

    // Keep only z cells with positive mass and a defined conditional mean.
    std::vector<std::size_t> keep;
    for (std::size_t zc = 0; zc < p_aw_given_z.m.cols; ++zc)
        if (p_aw_given_z.col_defined[zc] && ey_given_z.defined[zc]) keep.push_back(zc);
    if (keep.empty()) throw schema_error("solve_outcome_bridge: no defined z cells");

    linalg::Matrix coef(p_aw_given_z.m.rows, keep.size());
    std::vector<double> rhs(keep.size());
    for (std::size_t j = 0; j < keep.size(); ++j) {
        rhs[j] = ey_given_z.values[keep[j]];
        for (std::size_t i = 0; i < coef.rows; ++i) coef(i, j) = p_aw_given_z.m(i, keep[j]);
    }

    BridgeSolution sol = solve_row_system(coef, rhs, tol);
    sol.labels.resize(coef.rows);
    for (std::size_t i = 0; i < coef.rows; ++i) sol.labels[i] = p_aw_given_z.row_label(i);
    return sol;
}

double effect_from_outcome_bridge(const BridgeSolution& sol, const std::vector<double>& p_w,
                                  const ContrastSpec& c, std::size_t d_a, std::size_t d_w) {
    if (!sol.valid())
        throw identification_error(
            "outcome bridge residual above tolerance: completeness of W for U likely "
            "violated");
    if (sol.coeffs.size() != d_a * d_w)
        throw schema_error("effect_from_outcome_bridge: coefficient size mismatch");
    if (p_w.size() != d_w) throw schema_error("effect_from_outcome_bridge: p(w) size mismatch");

    std::vector<double> mu = c.measure();
    double j_val = 0.0;
    for (std::size_t j = 0; j < c.support.size(); ++j) {
        if (c.weights[j] == 0.0) continue;
        double av = c.support[j];
        if (av != std::floor(av) || av < 0.0 || av >= static_cast<double>(d_a))
            throw identification_error("contrast value outside treatment codebook");
        auto a = static_cast<std::size_t>(av);
        double inner = 0.0;
        for (std::size_t w = 0; w < d_w; ++w) inner += sol.coeffs[a * d_w + w] * p_w[w];
        j_val += c.weights[j] * mu[j] * inner;
    }
    return j_val;
}

BridgeSolution perturb_nullspace(const BridgeSolution& sol, double magnitude,
                                 std::uint64_t seed) {
    if (sol.nullspace_dim == 0)
        throw identification_error("perturb_nullspace: solution is unique (no null space)");
    rng::Rng r(seed);
    std::vector<double> mix(sol.nullspace_dim);
    double norm = 0.0;
    for (auto& m : mix) {
        m = r.normal();
        norm += m * m;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;

    BridgeSolution out = sol;
    for (std::size_t k = 0; k < sol.nullspace_dim; ++k) {
        double scale = magnitude * mix[k] / norm;
        for (std::size_t i = 0; i < out.coeffs.size(); ++i)
            out.coeffs[i] += scale * sol.nullspace(i, k);
    }
    return out;
}

BridgeSolution solve_tau_cell(const linalg::Matrix& p_w1_given_w0,
                              const std::vector<double>& f_a_given_w0, double tol,
                              const std::vector<double>& w0_weights) {
    return solve_row_system(p_w1_given_w0, f_a_given_w0, tol, w0_weights);
}

BridgeSolution solve_kappa_cell(const linalg::Matrix& p_w0_given_w1,
                                const std::vector<double>& density_ratio, double tol,
                                const std::vector<double>& w1_weights) {
    return solve_row_system(p_w0_given_w1, density_ratio, tol, w1_weights);
}

ControlQuantityResult control_quantity_from_tau(const BridgeSolution& tau,
                                                const std::vector<double>& p_w1) {
    if (!tau.valid())
        throw identification_error(
            "control bridge residual above tolerance: W0/W1 relevance for U likely violated");
    if (tau.coeffs.size() != p_w1.size())
        throw schema_error("control_quantity_from_tau: marginal size mismatch");
    double v = 0.0;
    for (std::size_t i = 0; i < p_w1.size(); ++i) v += tau.coeffs[i] * p_w1[i];
    ControlQuantityResult out;
    if (v < 0.0) {
        out.clip_amount = -v;
        v = 0.0;
    } else if (v > 1.0) {
        out.clip_amount = v - 1.0;
        v = 1.0;
    }
    out.value = v;
    return out;
}

BridgeSolution solve_h_cell(const linalg::Matrix& p_w_given_z,
                            const std::vector<double>& ey_given_z, double tol,
                            const std::vector<double>& z_weights) {
    if (p_w_given_z.cols == 0 || ey_given_z.empty())
        throw support_error("outcome bridge cell has no instrument support");
    return solve_row_system(p_w_given_z, ey_given_z, tol, z_weights);
}

BridgeSolution solve_q_cell(const linalg::Matrix& p_z_given_w,
                            const std::vector<double>& f_a_given_vw, double tol,
                            const std::vector<double>& w_weights) {
    if (p_z_given_w.cols == 0 || f_a_given_vw.empty())
        throw support_error("action bridge cell has no proxy support");
    std::vector<double> rhs(f_a_given_vw.size());
    for (std::size_t i = 0; i < rhs.size(); ++i) {
        if (f_a_given_vw[i] <= 0.0)
            throw support_error(
                "zero generalised propensity on the contrast support: common support "
                "violated");
        rhs[i] = 1.0 / f_a_given_vw[i];
    }
    return solve_row_system(p_z_given_w, rhs, tol, w_weights);
}

void write_bridge_csv(std::ostream& os, const BridgeSolution& sol) {
    os << "cell,coefficient\n";
    for (std::size_t i = 0; i < sol.coeffs.size(); ++i) {
        os << (i < sol.labels.size() ? sol.labels[i] : std::to_string(i)) << ",";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", sol.coeffs[i]);
        os << buf << "\n";
    }
}

}  // namespace icc::bridge
