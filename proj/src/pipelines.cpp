#include "icc/pipelines.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "icc/bridge_discrete.hpp"
#include "icc/control_function.hpp"
#include "icc/errors.hpp"
#include "icc/linear_icc.hpp"
#include "icc/sieve_bridge.hpp"
#include "icc/synth.hpp"

namespace icc::pipelines {

namespace {

linalg::Matrix columns_to_matrix(const std::vector<const Column*>& cols, std::size_t n) {
    linalg::Matrix m(n, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j)
        for (std::size_t i = 0; i < n; ++i) m(i, j) = cols[j]->values[i];
    return m;
}

std::vector<int> int_codes(const Column& col) {
    std::vector<int> out(col.values.size());
    for (std::size_t i = 0; i < col.values.size(); ++i) {
        double v = col.values[i];
        if (v != std::floor(v) || v < 0.0)
            throw schema_error("column '" + col.name + "' must hold nonnegative integer codes");
        out[i] = static_cast<int>(v);
    }
    return out;
}

}  // namespace

LinearParts linear_parts(const Dataset& ds) {
    validate_roles(ds, /*require_instrument=*/true);
    LinearParts parts;
    parts.y = ds.by_role(VariableRole::outcome)[0]->values;
    std::size_t n = parts.y.size();
    parts.a = columns_to_matrix(ds.by_role(VariableRole::treatment), n);
    parts.z = columns_to_matrix(ds.by_role(VariableRole::instrument), n);
    auto ws = ds.by_role(VariableRole::outcome_proxy);
    if (ws.empty()) throw schema_error("linear estimators need outcome_proxy columns");
    parts.w = columns_to_matrix(ws, n);
    return parts;
}

estimators::EstimateReport estimate_linear(const Dataset& ds, const std::string& method,
                                           std::optional<std::size_t> rank) {
    LinearParts parts = linear_parts(ds);
    estimators::EstimateReport rep;
    rep.n_used = parts.y.size();
    rep.estimator = method;

    if (method == "ols") {
        // Naive benchmark: y on (1, A, W).
        linalg::Matrix x(parts.y.size(), 1 + parts.a.cols + parts.w.cols);
        for (std::size_t i = 0; i < x.rows; ++i) {
            x(i, 0) = 1.0;
            for (std::size_t j = 0; j < parts.a.cols; ++j) x(i, 1 + j) = parts.a(i, j);
            for (std::size_t j = 0; j < parts.w.cols; ++j)
                x(i, 1 + parts.a.cols + j) = parts.w(i, j);
        }
        linear::OlsFit fit = linear::fit_ols(parts.y, x);
        rep.j_hat = fit.coef[1];
        rep.se = std::sqrt(fit.cov(1, 1));
        return rep;
    }
    if (method == "2sls") {
        linear::OlsFit fit = linear::fit_2sls(parts.y, parts.a, parts.z);
        rep.j_hat = fit.coef[0];
        rep.se = std::sqrt(fit.cov(0, 0));
        return rep;
    }

    linear::LinearICCFit fit;
    if (method == "icc")
        fit = linear::fit_icc(parts.y, parts.a, parts.z, parts.w, rank);
    else if (method == "icc_cf")
        fit = linear::fit_icc_control_form(parts.y, parts.a, parts.z, parts.w, rank);
    else if (method == "icc_2s")
        fit = linear::fit_icc_two_stage(parts.y, parts.a, parts.z, parts.w, rank);
    else
        throw config_error("unknown linear method '" + method + "'");
    rep.j_hat = fit.beta_hat[0];
    rep.se = std::sqrt(fit.cov(0, 0));
    rep.diagnostics.emplace_back("rank_used", static_cast<double>(fit.rank_used));
    for (std::size_t k = 0; k < fit.singular_values.size(); ++k)
        rep.diagnostics.emplace_back("sigma_" + std::to_string(k), fit.singular_values[k]);
    return rep;
}

estimators::EstimateReport estimate_discrete_outcome(const Dataset& ds, const ContrastSpec& c,
                                                     double tol) {
    estimators::DiscreteRows rows = estimators::rows_from_dataset(ds);

    int d_a = 0;
    for (double a : rows.a) {
        if (a != std::floor(a) || a < 0.0)
            throw schema_error("discrete route needs nonnegative integer treatment codes");
        d_a = std::max(d_a, static_cast<int>(a) + 1);
    }
    auto n_a = static_cast<std::size_t>(d_a);
    auto n_z = static_cast<std::size_t>(rows.n_z);
    auto n_w = static_cast<std::size_t>(rows.n_w);

    // Empirical P(A, W | Z) and E[Y | Z].
    std::vector<double> mass_awz(n_a * n_w * n_z, 0.0), mass_z(n_z, 0.0), ysum_z(n_z, 0.0);
    std::vector<double> p_w(n_w, 0.0);
    for (std::size_t i = 0; i < rows.n(); ++i) {
        auto a = static_cast<std::size_t>(rows.a[i]);
        auto z = static_cast<std::size_t>(rows.z[i]);
        auto w = static_cast<std::size_t>(rows.w[i]);
        mass_awz[(a * n_w + w) * n_z + z] += rows.weight[i];
        mass_z[z] += rows.weight[i];
        ysum_z[z] += rows.weight[i] * rows.y[i];
        p_w[w] += rows.weight[i];
    }
    synth::LabeledMatrix p_aw_z;
    p_aw_z.row_axes = {synth::Axis::A, synth::Axis::W};
    p_aw_z.col_axes = {synth::Axis::Z};
    p_aw_z.row_dims = {n_a, n_w};
    p_aw_z.col_dims = {n_z};
    p_aw_z.m = linalg::Matrix(n_a * n_w, n_z);
    p_aw_z.col_defined.assign(n_z, false);
    synth::ConditionalVector ey;
    ey.values.assign(n_z, 0.0);
    ey.defined.assign(n_z, false);
    for (std::size_t z = 0; z < n_z; ++z) {
        if (mass_z[z] <= 0.0) continue;
        p_aw_z.col_defined[z] = true;
        ey.defined[z] = true;
        ey.values[z] = ysum_z[z] / mass_z[z];
        for (std::size_t rw = 0; rw < n_a * n_w; ++rw)
            p_aw_z.m(rw, z) = mass_awz[rw * n_z + z] / mass_z[z];
    }

    bridge::BridgeSolution sol = bridge::solve_outcome_bridge(p_aw_z, ey, tol);
    estimators::EstimateReport rep;
    rep.estimator = "discrete_outcome_bridge";
    rep.n_used = rows.n();
    rep.diagnostics.emplace_back("residual_norm", sol.residual_norm);
    rep.diagnostics.emplace_back("rhs_scale", sol.rhs_scale);
    rep.diagnostics.emplace_back("nullspace_dim", static_cast<double>(sol.nullspace_dim));
    synth::RankResult rk = synth::completeness_rank(p_aw_z, 1e-8);
    rep.diagnostics.emplace_back("rank_p_aw_z", static_cast<double>(rk.rank));
    rep.j_hat = bridge::effect_from_outcome_bridge(sol, p_w, c, n_a, n_w);
    return rep;
}

FirstStageReports estimate_first_stage(const Dataset& ds, const ContrastSpec& c,
                                       std::size_t n_bins, double tol,
                                       const std::string& control) {
    validate_roles(ds, /*require_instrument=*/true);
    const Column& ycol = *ds.by_role(VariableRole::outcome)[0];
    const Column& acol = *ds.by_role(VariableRole::treatment)[0];
    auto zs = ds.by_role(VariableRole::instrument);
    auto w0s = ds.by_role(VariableRole::proxy_w0);
    auto w1s = ds.by_role(VariableRole::proxy_w1);
    if (zs.size() != 1)
        throw schema_error("first-stage route needs a single categorical instrument");
    std::vector<int> z = int_codes(*zs[0]);
    std::size_t n = ds.n();

    FirstStageReports out;
    std::vector<double> control_values;

    if (control == "empirical") {
        control_values = control::empirical_cdf_control(acol.values, z).values;
    } else if (control == "oracle") {
        const Column* v43 = ds.find("v43_oracle");
        if (!v43) throw schema_error("oracle control requires a recorded v43_oracle column");
        control_values = v43->values;
    } else if (control == "bridge") {
        if (w0s.size() != 1 || w1s.size() != 1)
            throw schema_error("bridge control needs single proxy_w0 and proxy_w1 columns");
        std::vector<int> w0 = int_codes(*w0s[0]);
        std::vector<int> w1 = int_codes(*w1s[0]);
        std::size_t n_z = 0, n_w0 = 0, n_w1 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            n_z = std::max(n_z, static_cast<std::size_t>(z[i]) + 1);
            n_w0 = std::max(n_w0, static_cast<std::size_t>(w0[i]) + 1);
            n_w1 = std::max(n_w1, static_cast<std::size_t>(w1[i]) + 1);
        }
        std::vector<double> mass_zw0w1(n_z * n_w0 * n_w1, 0.0), p_w1(n_w1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            mass_zw0w1[(static_cast<std::size_t>(z[i]) * n_w0 +
                        static_cast<std::size_t>(w0[i])) *
                           n_w1 +
                       static_cast<std::size_t>(w1[i])] += 1.0;
            p_w1[static_cast<std::size_t>(w1[i])] += 1.0;
        }
        for (auto& v : p_w1) v /= static_cast<double>(n);

        // Group rows by (z, w0) for the empirical conditional CDFs of A.
        std::vector<std::vector<std::size_t>> cell_rows(n_z * n_w0);
        for (std::size_t i = 0; i < n; ++i)
            cell_rows[static_cast<std::size_t>(z[i]) * n_w0 + static_cast<std::size_t>(w0[i])]
                .push_back(i);
        for (auto& rows_in : cell_rows)
            std::sort(rows_in.begin(), rows_in.end(), [&](std::size_t i, std::size_t j) {
                return acol.values[i] < acol.values[j];
            });

        auto f_mid_cell = [&](double a, std::size_t cell) {
            const auto& rows_in = cell_rows[cell];
            if (rows_in.empty()) return 0.0;
            auto cmp_lo = [&](std::size_t i, double v) { return acol.values[i] < v; };
            auto lo = std::lower_bound(rows_in.begin(), rows_in.end(), a, cmp_lo);
            auto hi = std::upper_bound(rows_in.begin(), rows_in.end(), a,
                                       [&](double v, std::size_t i) {
                                           return v < acol.values[i];
                                       });
            double below = static_cast<double>(lo - rows_in.begin());
            double at = static_cast<double>(hi - lo);
            return (below + 0.5 * at) / static_cast<double>(rows_in.size());
        };

        // tau solves per distinct (a, z) pair present in the data.
        std::map<std::pair<double, int>, double> v_table;
        control_values.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::pair<double, int> key{acol.values[i], z[i]};
            auto it = v_table.find(key);
            if (it == v_table.end()) {
                auto zi = static_cast<std::size_t>(z[i]);
                linalg::Matrix p_w1_w0(n_w1, n_w0);
                std::vector<double> rhs(n_w0, 0.0), w0_mass(n_w0, 0.0);
                for (std::size_t c0 = 0; c0 < n_w0; ++c0) {
                    double mz = 0.0;
                    for (std::size_t c1 = 0; c1 < n_w1; ++c1)
                        mz += mass_zw0w1[(zi * n_w0 + c0) * n_w1 + c1];
                    w0_mass[c0] = mz;
                    if (mz > 0.0)
                        for (std::size_t c1 = 0; c1 < n_w1; ++c1)
                            p_w1_w0(c1, c0) =
                                mass_zw0w1[(zi * n_w0 + c0) * n_w1 + c1] / mz;
                    rhs[c0] = f_mid_cell(acol.values[i], zi * n_w0 + c0);
                }
                bridge::BridgeSolution tau =
                    bridge::solve_tau_cell(p_w1_w0, rhs, tol, w0_mass);
                out.tau_max_residual = std::max(out.tau_max_residual, tau.residual_norm);
                bridge::ControlQuantityResult cq =
                    bridge::control_quantity_from_tau(tau, p_w1);
                out.clip_total += cq.clip_amount;
                it = v_table.emplace(key, cq.value).first;
            }
            control_values[i] = it->second;
        }
    } else {
        throw config_error("unknown control source '" + control + "'");
    }

    control::BinAssignment bins = control::assign_equal_mass_bins(control_values, {}, n_bins);

    estimators::DiscreteRows rows = estimators::rows_from_dataset(ds);
    rows.vbin = std::move(bins.bins);
    rows.n_vbins = static_cast<int>(n_bins);
    rows.y = ycol.values;

    estimators::TildeBridges bridges = estimators::solve_tilde_bridges(rows, c, tol);
    out.ipw = estimators::tilde_phi_ipw(rows, bridges, c);
    out.reg = estimators::tilde_phi_reg(rows, bridges, c);
    out.dr = estimators::tilde_phi_dr(rows, bridges, c);
    return out;
}

estimators::EstimateReport estimate_sieve(const Dataset& ds, const ContrastSpec& c,
                                          int degree_h, int degree_z, double ridge) {
    LinearParts parts = linear_parts(ds);
    std::vector<int> deg_h(parts.a.cols + parts.w.cols, degree_h);
    std::vector<int> deg_z(parts.z.cols, degree_z);
    sieve::BasisSpec basis_h = sieve::BasisSpec::poly(deg_h, degree_h > 1, ridge);
    sieve::BasisSpec basis_z = sieve::BasisSpec::poly(deg_z, degree_z > 1);
    sieve::SieveFit fit =
        sieve::fit_sieve_bridge(parts.y, parts.a, parts.w, parts.z, basis_h, basis_z);
    double lo = parts.a(0, 0), hi = parts.a(0, 0);
    for (std::size_t i = 0; i < parts.a.rows; ++i) {
        lo = std::min(lo, parts.a(i, 0));
        hi = std::max(hi, parts.a(i, 0));
    }
    return sieve::effect_from_sieve(fit, parts.w, c, {lo, hi});
}

}  // namespace icc::pipelines
