#include "icc/oracle_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icc/control_function.hpp"
#include "icc/errors.hpp"
#include "icc/rng.hpp"

namespace icc::suite {

namespace {

using estimators::CellBridgeTable;
using estimators::DiscreteRows;
using synth::Axis;

// Midpoint CDF of A at every treatment level, per (z, u); one sweep each.
linalg::Matrix f_mid_table(const synth::FirstStagePopulation& fs,
                           const synth::FirstStageTables& tab) {
    linalg::Matrix f(fs.a_levels.size(), fs.d_z * fs.d_u);
    for (std::size_t z = 0; z < fs.d_z; ++z)
        for (std::size_t u = 0; u < fs.d_u; ++u) {
            double below = 0.0;
            std::size_t g = 0;
            for (std::size_t ai = 0; ai < fs.a_levels.size(); ++ai) {
                double at = 0.0;
                while (g < fs.n_grid &&
                       tab.a_idx[(u * fs.d_z + z) * fs.n_grid + g] == ai) {
                    at += fs.eta_weights(u, g);
                    ++g;
                }
                f(ai, z * fs.d_u + u) = below + 0.5 * at;
                below += at;
            }
        }
    return f;
}

}  // namespace

OutcomeRouteCheck check_outcome_route(const synth::DiscretePopulation& pop,
                                      const ContrastSpec& c, double tol) {
    pop.validate();
    OutcomeRouteCheck out;
    out.j_true = synth::true_J(pop, c);

    synth::LabeledMatrix p_aw_z = synth::cond_matrix(pop, {Axis::A, Axis::W}, {Axis::Z});
    synth::ConditionalVector ey = pop.ey_given_z();
    out.solution = bridge::solve_outcome_bridge(p_aw_z, ey, tol);
    out.bridge_residual = out.solution.residual_norm;
    out.nullspace_dim = out.solution.nullspace_dim;

    synth::LabeledMatrix p_w_u = synth::cond_matrix(pop, {Axis::W}, {Axis::U});
    synth::RankResult rw = synth::completeness_rank(p_w_u, 1e-10);
    out.rank_w = rw.rank;
    out.rank_w_ok = rw.full_column_rank;

    synth::LabeledMatrix p_au_z = synth::cond_matrix(pop, {Axis::A, Axis::U}, {Axis::Z});
    synth::RankResult rz = synth::completeness_rank(p_au_z, 1e-10);
    out.rank_z = rz.rank;
    out.rank_z_ok = rz.rank == pop.d_a * pop.d_u;  // full row rank

    std::vector<double> p_w = pop.marginal(Axis::W);
    out.j_bridge = out.solution.valid()
                       ? bridge::effect_from_outcome_bridge(out.solution, p_w, c, pop.d_a,
                                                            pop.d_w)
                       : std::numeric_limits<double>::quiet_NaN();

    // Latent system H(a,.) P(W|U) = k0(a,.), solved per treatment value,
    // then cross-checked against the observed system and vice versa.
    std::vector<double> latent(pop.d_a * pop.d_w, 0.0);
    for (std::size_t a = 0; a < pop.d_a; ++a) {
        std::vector<double> k_row(pop.d_u);
        for (std::size_t u = 0; u < pop.d_u; ++u) k_row[u] = pop.k0_at(a, u);
        bridge::BridgeSolution sol = bridge::solve_row_system(p_w_u.m, k_row, tol);
        for (std::size_t w = 0; w < pop.d_w; ++w) latent[a * pop.d_w + w] = sol.coeffs[w];
    }
    double res_obs = 0.0;
    for (std::size_t z = 0; z < pop.d_z; ++z) {
        if (!ey.defined[z]) continue;
        double fitted = 0.0;
        for (std::size_t i = 0; i < pop.d_a * pop.d_w; ++i)
            fitted += latent[i] * p_aw_z.m(i, z);
        res_obs += (fitted - ey.values[z]) * (fitted - ey.values[z]);
    }
    out.latent_in_observed_residual = std::sqrt(res_obs);

    double res_lat = 0.0;
    for (std::size_t a = 0; a < pop.d_a; ++a)
        for (std::size_t u = 0; u < pop.d_u; ++u) {
            double fitted = 0.0;
            for (std::size_t w = 0; w < pop.d_w; ++w)
                fitted += out.solution.coeffs[a * pop.d_w + w] * p_w_u.m(w, u);
            double d = fitted - pop.k0_at(a, u);
            res_lat += d * d;
        }
    out.observed_in_latent_residual = std::sqrt(res_lat);
    return out;
}

double max_nullspace_effect_shift(const synth::DiscretePopulation& pop, const ContrastSpec& c,
                                  const OutcomeRouteCheck& check, std::size_t n_perturbations,
                                  double magnitude, std::uint64_t seed) {
    std::vector<double> p_w = pop.marginal(Axis::W);
    double max_shift = 0.0;
    for (std::size_t k = 0; k < n_perturbations; ++k) {
        bridge::BridgeSolution pert =
            bridge::perturb_nullspace(check.solution, magnitude, seed + k);
        double j = bridge::effect_from_outcome_bridge(pert, p_w, c, pop.d_a, pop.d_w);
        max_shift = std::max(max_shift, std::abs(j - check.j_bridge));
    }
    return max_shift;
}

FirstStageRows first_stage_rows(const synth::FirstStagePopulation& fs, std::size_t n_bins,
                                ControlSource source, double tol) {
    fs.validate();
    synth::FirstStageTables tab = synth::first_stage_tables(fs);
    std::vector<double> pu = fs.marginal_u();

    FirstStageRows out;

    // Control-quantity table, either the oracle or the tau/kappa-derived one.
    linalg::Matrix v43 = tab.v43;
    if (source == ControlSource::tau_kappa) {
        linalg::Matrix fzu = f_mid_table(fs, tab);

        // Marginals and conditionals of (z, w0, w1).
        std::vector<double> p_w1(fs.d_w1, 0.0), p_z(fs.d_z, 0.0);
        std::vector<double> mass_zw0(fs.d_z * fs.d_w0, 0.0);
        std::vector<double> mass_zw1(fs.d_z * fs.d_w1, 0.0);
        std::vector<double> mass_zw0w1(fs.d_z * fs.d_w0 * fs.d_w1, 0.0);
        std::vector<double> mass_zw0u(fs.d_z * fs.d_w0 * fs.d_u, 0.0);
        for (std::size_t u = 0; u < fs.d_u; ++u)
            for (std::size_t z = 0; z < fs.d_z; ++z)
                for (std::size_t w0 = 0; w0 < fs.d_w0; ++w0)
                    for (std::size_t w1 = 0; w1 < fs.d_w1; ++w1) {
                        double m = fs.joint(u, z, w0, w1);
                        p_w1[w1] += m;
                        p_z[z] += m;
                        mass_zw0[z * fs.d_w0 + w0] += m;
                        mass_zw1[z * fs.d_w1 + w1] += m;
                        mass_zw0w1[(z * fs.d_w0 + w0) * fs.d_w1 + w1] += m;
                        mass_zw0u[(z * fs.d_w0 + w0) * fs.d_u + u] += m;
                    }

        // kappa per z: kappa(z, .) * P(W0 | z, W1) = f(W1) / f(W1 | z),
        // over the w1 cells with mass under that z.
        out.kappa_all_valid = true;
        for (std::size_t z = 0; z < fs.d_z; ++z) {
            std::vector<std::size_t> w1s;
            for (std::size_t w1 = 0; w1 < fs.d_w1; ++w1)
                if (mass_zw1[z * fs.d_w1 + w1] > 0.0) w1s.push_back(w1);
            if (w1s.empty()) continue;
            linalg::Matrix p_w0_w1(fs.d_w0, w1s.size());
            std::vector<double> ratio(w1s.size());
            for (std::size_t j = 0; j < w1s.size(); ++j) {
                double mz_w1 = mass_zw1[z * fs.d_w1 + w1s[j]];
                ratio[j] = p_w1[w1s[j]] / (mz_w1 / p_z[z]);
                for (std::size_t w0 = 0; w0 < fs.d_w0; ++w0)
                    p_w0_w1(w0, j) =
                        mass_zw0w1[(z * fs.d_w0 + w0) * fs.d_w1 + w1s[j]] / mz_w1;
            }
            bridge::BridgeSolution ks = bridge::solve_kappa_cell(p_w0_w1, ratio, tol);
            out.kappa_max_residual = std::max(out.kappa_max_residual, ks.residual_norm);
            if (!ks.valid()) out.kappa_all_valid = false;
        }

        // tau per (attainable treatment level, z), then V(a, z) from the
        // W1 marginal.
        std::vector<char> attainable(fs.a_levels.size() * fs.d_z, 0);
        for (std::size_t u = 0; u < fs.d_u; ++u)
            for (std::size_t z = 0; z < fs.d_z; ++z)
                for (std::size_t g = 0; g < fs.n_grid; ++g)
                    attainable[tab.a_idx[(u * fs.d_z + z) * fs.n_grid + g] * fs.d_z + z] = 1;

        v43 = linalg::Matrix(fs.a_levels.size(), fs.d_z);
        for (std::size_t z = 0; z < fs.d_z; ++z) {
            std::vector<std::size_t> w0s;
            for (std::size_t w0 = 0; w0 < fs.d_w0; ++w0)
                if (mass_zw0[z * fs.d_w0 + w0] > 0.0) w0s.push_back(w0);
            if (w0s.empty()) continue;
            linalg::Matrix p_w1_w0(fs.d_w1, w0s.size());
            for (std::size_t j = 0; j < w0s.size(); ++j) {
                double mz_w0 = mass_zw0[z * fs.d_w0 + w0s[j]];
                for (std::size_t w1 = 0; w1 < fs.d_w1; ++w1)
                    p_w1_w0(w1, j) =
                        mass_zw0w1[(z * fs.d_w0 + w0s[j]) * fs.d_w1 + w1] / mz_w0;
            }
            for (std::size_t ai = 0; ai < fs.a_levels.size(); ++ai) {
                if (!attainable[ai * fs.d_z + z]) continue;
                std::vector<double> f_zw0(w0s.size(), 0.0);
                for (std::size_t j = 0; j < w0s.size(); ++j) {
                    double mz_w0 = mass_zw0[z * fs.d_w0 + w0s[j]];
                    for (std::size_t u = 0; u < fs.d_u; ++u)
                        f_zw0[j] += mass_zw0u[(z * fs.d_w0 + w0s[j]) * fs.d_u + u] /
                                    mz_w0 * fzu(ai, z * fs.d_u + u);
                }
                bridge::BridgeSolution ts = bridge::solve_tau_cell(p_w1_w0, f_zw0, tol);
                out.tau_max_residual = std::max(out.tau_max_residual, ts.residual_norm);
                bridge::ControlQuantityResult cq = bridge::control_quantity_from_tau(ts, p_w1);
                out.clip_total += cq.clip_amount;
                v43(ai, z) = cq.value;
                out.tau_identity_max_err =
                    std::max(out.tau_identity_max_err, std::abs(cq.value - tab.v43(ai, z)));
            }
        }
    }

    // Atom rows.
    DiscreteRows rows;
    rows.n_z = static_cast<int>(fs.d_z);
    rows.n_w = static_cast<int>(fs.d_w0 * fs.d_w1);
    rows.n_u = static_cast<int>(fs.d_u);
    for (std::size_t u = 0; u < fs.d_u; ++u)
        for (std::size_t z = 0; z < fs.d_z; ++z)
            for (std::size_t w0 = 0; w0 < fs.d_w0; ++w0)
                for (std::size_t w1 = 0; w1 < fs.d_w1; ++w1) {
                    double mass = fs.joint(u, z, w0, w1);
                    if (mass <= 0.0) continue;
                    for (std::size_t g = 0; g < fs.n_grid; ++g) {
                        std::size_t idx = (u * fs.d_z + z) * fs.n_grid + g;
                        std::size_t ai = tab.a_idx[idx];
                        rows.weight.push_back(mass * fs.eta_weights(u, g));
                        rows.y.push_back(fs.k0v_at(ai, g, u));
                        rows.a.push_back(fs.a_levels[ai]);
                        rows.z.push_back(static_cast<int>(z));
                        rows.w.push_back(static_cast<int>(w0 * fs.d_w1 + w1));
                        rows.u.push_back(static_cast<int>(u));
                        out.control.push_back(source == ControlSource::tau_kappa
                                                  ? v43(ai, z)
                                                  : tab.v43(ai, z));
                    }
                }

    control::BinAssignment bins =
        control::assign_equal_mass_bins(out.control, rows.weight, n_bins);
    rows.vbin = std::move(bins.bins);
    rows.n_vbins = static_cast<int>(n_bins);
    out.rows = std::move(rows);
    return out;
}

FirstStageCheck check_first_stage_route(const synth::FirstStagePopulation& fs,
                                        const ContrastSpec& c, std::size_t n_bins,
                                        ControlSource source, double tol) {
    FirstStageRows fsr = first_stage_rows(fs, n_bins, source, tol);
    estimators::TildeBridges bridges = estimators::solve_tilde_bridges(fsr.rows, c, tol);

    FirstStageCheck out;
    out.oracle_effect = fs.oracle_effect(c);
    out.bridges_valid = bridges.h.all_valid() && bridges.q.all_valid();
    out.h_max_residual = bridges.h.max_residual;
    out.q_max_residual = bridges.q.max_residual;
    out.tau_identity_max_err = fsr.tau_identity_max_err;
    out.kappa_all_valid = fsr.kappa_all_valid || source == ControlSource::oracle_v43;
    out.ipw = estimators::tilde_phi_ipw(fsr.rows, bridges, c).j_hat;
    out.reg = estimators::tilde_phi_reg(fsr.rows, bridges, c).j_hat;
    out.dr = estimators::tilde_phi_dr(fsr.rows, bridges, c).j_hat;
    return out;
}

SurrogateCheck check_surrogate_reg(const synth::FirstStagePopulation& fs,
                                   const ContrastSpec& c, std::size_t n_bins) {
    fs.validate();
    synth::FirstStageTables tab = synth::first_stage_tables(fs);

    DiscreteRows rows;
    rows.n_z = static_cast<int>(fs.d_z);
    rows.n_w = static_cast<int>(fs.d_w0 * fs.d_w1);
    rows.n_u = static_cast<int>(fs.d_u);
    std::vector<double> v_oracle, v_quantity;
    for (std::size_t u = 0; u < fs.d_u; ++u)
        for (std::size_t z = 0; z < fs.d_z; ++z)
            for (std::size_t w0 = 0; w0 < fs.d_w0; ++w0)
                for (std::size_t w1 = 0; w1 < fs.d_w1; ++w1) {
                    double mass = fs.joint(u, z, w0, w1);
                    if (mass <= 0.0) continue;
                    for (std::size_t g = 0; g < fs.n_grid; ++g) {
                        std::size_t idx = (u * fs.d_z + z) * fs.n_grid + g;
                        std::size_t ai = tab.a_idx[idx];
                        rows.weight.push_back(mass * fs.eta_weights(u, g));
                        rows.y.push_back(fs.k0v_at(ai, g, u));
                        rows.a.push_back(fs.a_levels[ai]);
                        rows.z.push_back(static_cast<int>(z));
                        rows.w.push_back(static_cast<int>(w0 * fs.d_w1 + w1));
                        rows.u.push_back(static_cast<int>(u));
                        v_oracle.push_back(tab.v_oracle[idx]);
                        v_quantity.push_back(tab.v43(ai, z));
                    }
                }

    control::BinAssignment b_oracle =
        control::assign_equal_mass_bins(v_oracle, rows.weight, n_bins);
    control::BinAssignment b_quantity =
        control::assign_equal_mass_bins(v_quantity, rows.weight, n_bins);

    SurrogateCheck out;
    double same_mass = 0.0, total = 0.0;
    for (std::size_t i = 0; i < rows.weight.size(); ++i) {
        total += rows.weight[i];
        if (b_oracle.bins[i] == b_quantity.bins[i]) same_mass += rows.weight[i];
    }
    out.identical_bin_mass = same_mass / total;

    rows.n_vbins = static_cast<int>(n_bins);
    rows.vbin = b_oracle.bins;
    out.reg_oracle_v = estimators::phi_reg(rows, c).j_hat;
    rows.vbin = b_quantity.bins;
    out.reg_v43 = estimators::phi_reg(rows, c).j_hat;
    return out;
}

BiasIdentityCheck check_bias_identities(const synth::FirstStagePopulation& fs,
                                        const ContrastSpec& c, std::size_t n_bins,
                                        std::size_t n_plugins, std::uint64_t seed,
                                        double tol) {
    FirstStageRows fsr = first_stage_rows(fs, n_bins, ControlSource::oracle_v43, tol);
    estimators::TildeBridges bridges = estimators::solve_tilde_bridges(fsr.rows, c, tol);
    double j_true = fs.oracle_effect(c);

    BiasIdentityCheck out;
    // The valid bridges themselves must make both identities vanish.
    estimators::IdentityPair ip =
        estimators::bias_identity_ipw(fsr.rows, bridges, bridges.q, c, j_true);
    estimators::IdentityPair rp =
        estimators::bias_identity_reg(fsr.rows, bridges, bridges.h, c, j_true);
    out.valid_plugin_max_bias = std::max(std::abs(ip.lhs), std::abs(rp.lhs));
    out.max_abs_diff = std::max(std::abs(ip.lhs - ip.rhs), std::abs(rp.lhs - rp.rhs));

    rng::Rng r(seed);
    for (std::size_t k = 0; k < n_plugins; ++k) {
        CellBridgeTable q_plugin = bridges.q;
        for (std::size_t i = 0; i < q_plugin.coef.size(); ++i)
            if (q_plugin.cell_defined[i]) q_plugin.coef[i] += r.uniform(-2.0, 2.0);
        estimators::IdentityPair p1 =
            estimators::bias_identity_ipw(fsr.rows, bridges, q_plugin, c, j_true);
        out.max_abs_diff = std::max(out.max_abs_diff, std::abs(p1.lhs - p1.rhs));
        out.min_rhs_magnitude = std::min(out.min_rhs_magnitude, std::abs(p1.rhs));

        CellBridgeTable h_plugin = bridges.h;
        for (std::size_t i = 0; i < h_plugin.coef.size(); ++i)
            if (h_plugin.cell_defined[i]) h_plugin.coef[i] += r.uniform(-2.0, 2.0);
        estimators::IdentityPair p2 =
            estimators::bias_identity_reg(fsr.rows, bridges, h_plugin, c, j_true);
        out.max_abs_diff = std::max(out.max_abs_diff, std::abs(p2.lhs - p2.rhs));
        out.min_rhs_magnitude = std::min(out.min_rhs_magnitude, std::abs(p2.rhs));
    }
    return out;
}

ContrastSpec default_first_stage_contrast(const synth::FirstStagePopulation& fs,
                                          std::size_t n_bins) {
    std::vector<double> supported = fs.fully_supported_values(n_bins);
    if (supported.size() < 2)
        throw identification_error(
            "no pair of fully supported treatment values: common support violated");
    double a0 = supported[supported.size() / 3];
    double a1 = supported[(2 * supported.size()) / 3];
    if (a0 == a1) a1 = supported.back();
    return ate_contrast(a1, a0);
}

}  // namespace icc::suite
