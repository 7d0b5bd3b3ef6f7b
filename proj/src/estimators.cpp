#include "icc/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "icc/errors.hpp"

namespace icc::estimators {

namespace {

std::vector<double> contrast_arms(const ContrastSpec& c) {
    std::vector<double> arms;
    for (std::size_t j = 0; j < c.support.size(); ++j)
        if (c.weights[j] != 0.0) arms.push_back(c.support[j]);
    return arms;
}

// pi(a) * mu(a) per arm: the integrand weight of the contrast integral.
std::vector<double> arm_weights(const ContrastSpec& c) {
    std::vector<double> mu = c.measure();
    std::vector<double> out;
    for (std::size_t j = 0; j < c.support.size(); ++j)
        if (c.weights[j] != 0.0) out.push_back(c.weights[j] * mu[j]);
    return out;
}

int arm_index(const std::vector<double>& arms, double a) {
    for (std::size_t k = 0; k < arms.size(); ++k)
        if (arms[k] == a) return static_cast<int>(k);
    return -1;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Mass and y-mass accumulators on (arm, vbin, z, w) cells.
struct CellAccum {
    std::size_t n_arms, n_vbins, n_z, n_w;
    std::vector<double> mass_abzw;  // ((arm*n_vbins+v)*n_z+z)*n_w+w
    std::vector<double> ysum_abz;   // (arm*n_vbins+v)*n_z+z
    std::vector<double> mass_bw;    // v*n_w+w, over all treatment values

    CellAccum(const DiscreteRows& rows, const std::vector<double>& arms)
        : n_arms(arms.size()),
          n_vbins(static_cast<std::size_t>(rows.n_vbins)),
          n_z(static_cast<std::size_t>(rows.n_z)),
          n_w(static_cast<std::size_t>(rows.n_w)) {
        mass_abzw.assign(n_arms * n_vbins * n_z * n_w, 0.0);
        ysum_abz.assign(n_arms * n_vbins * n_z, 0.0);
        mass_bw.assign(n_vbins * n_w, 0.0);
        for (std::size_t i = 0; i < rows.n(); ++i) {
            auto v = static_cast<std::size_t>(rows.vbin[i]);
            auto z = static_cast<std::size_t>(rows.z[i]);
            auto w = static_cast<std::size_t>(rows.w[i]);
            mass_bw[v * n_w + w] += rows.weight[i];
            int k = arm_index(arms, rows.a[i]);
            if (k < 0) continue;
            std::size_t cell = static_cast<std::size_t>(k) * n_vbins + v;
            mass_abzw[(cell * n_z + z) * n_w + w] += rows.weight[i];
            ysum_abz[cell * n_z + z] += rows.weight[i] * rows.y[i];
        }
    }

    double mass_abz(std::size_t arm, std::size_t v, std::size_t z) const {
        double s = 0.0;
        const double* base = &mass_abzw[((arm * n_vbins + v) * n_z + z) * n_w];
        for (std::size_t w = 0; w < n_w; ++w) s += base[w];
        return s;
    }
    double mass_abw(std::size_t arm, std::size_t v, std::size_t w) const {
        double s = 0.0;
        for (std::size_t z = 0; z < n_z; ++z)
            s += mass_abzw[((arm * n_vbins + v) * n_z + z) * n_w + w];
        return s;
    }
};

}  // namespace

void DiscreteRows::validate() const {
    std::size_t m = weight.size();
    if (y.size() != m || a.size() != m || vbin.size() != m || z.size() != m ||
        w.size() != m || u.size() != m)
        throw schema_error("rows: column length mismatch");
    for (std::size_t i = 0; i < m; ++i) {
        if (weight[i] < 0.0) throw schema_error("rows: negative weight");
        if (vbin[i] < 0 || vbin[i] >= n_vbins) throw schema_error("rows: vbin out of range");
        if (n_z > 0 ? (z[i] < 0 || z[i] >= n_z) : z[i] != -1)
            throw schema_error("rows: instrument cell out of range");
        if (n_w > 0 ? (w[i] < 0 || w[i] >= n_w) : w[i] != -1)
            throw schema_error("rows: proxy cell out of range");
        if (n_u > 0 ? (u[i] < 0 || u[i] >= n_u) : u[i] != -1)
            throw schema_error("rows: confounder cell out of range");
    }
}

DiscreteRows rows_from_population(const synth::DiscretePopulation& pop) {
    DiscreteRows rows;
    rows.n_vbins = 1;
    rows.n_z = static_cast<int>(pop.d_z);
    rows.n_w = static_cast<int>(pop.d_w);
    rows.n_u = static_cast<int>(pop.d_u);
    for (std::size_t u = 0; u < pop.d_u; ++u)
        for (std::size_t z = 0; z < pop.d_z; ++z)
            for (std::size_t a = 0; a < pop.d_a; ++a)
                for (std::size_t w = 0; w < pop.d_w; ++w) {
                    double mass = pop.prob(u, z, a, w);
                    if (mass <= 0.0) continue;
                    rows.weight.push_back(mass);
                    rows.y.push_back(pop.k0_at(a, u));
                    rows.a.push_back(static_cast<double>(a));
                    rows.vbin.push_back(0);
                    rows.z.push_back(static_cast<int>(z));
                    rows.w.push_back(static_cast<int>(w));
                    rows.u.push_back(static_cast<int>(u));
                }
    return rows;
}

DiscreteRows rows_from_dataset(const Dataset& ds) {
    validate_roles(ds, /*require_instrument=*/true);
    const Column& y = *ds.by_role(VariableRole::outcome)[0];
    const Column& a = *ds.by_role(VariableRole::treatment)[0];
    auto zs = ds.by_role(VariableRole::instrument);
    auto ws = ds.by_role(VariableRole::outcome_proxy);
    if (zs.size() != 1)
        throw schema_error("discrete rows need a single categorical instrument column");
    if (ws.empty()) {
        ws = ds.by_role(VariableRole::proxy_w0);
        auto w1 = ds.by_role(VariableRole::proxy_w1);
        ws.insert(ws.end(), w1.begin(), w1.end());
    }
    if (ws.empty()) throw schema_error("discrete rows need at least one proxy column");
    auto us = ds.by_role(VariableRole::latent_confounder);

    std::size_t n = ds.n();
    DiscreteRows rows;
    rows.weight.assign(n, 1.0 / static_cast<double>(n));
    rows.y = y.values;
    rows.a = a.values;
    rows.vbin.assign(n, 0);
    rows.n_vbins = 1;

    auto encode = [&](const std::vector<const Column*>& cols, std::vector<int>& out) {
        out.assign(n, 0);
        int radix = 1;
        for (const Column* col : cols) {
            int levels = 0;
            for (double v : col->values) {
                if (v != std::floor(v) || v < 0.0)
                    throw schema_error("column '" + col->name +
                                       "' must hold nonnegative integer codes");
                levels = std::max(levels, static_cast<int>(v) + 1);
            }
            for (std::size_t i = 0; i < n; ++i)
                out[i] = out[i] * levels + static_cast<int>(col->values[i]);
            radix *= levels;
        }
        return radix;
    };
    rows.n_z = encode(zs, rows.z);
    rows.n_w = encode(ws, rows.w);
    if (!us.empty()) {
        rows.n_u = encode(us, rows.u);
    } else {
        rows.u.assign(n, -1);
        rows.n_u = 0;
    }
    return rows;
}

bool CellBridgeTable::all_valid() const {
    for (auto v : cell_valid)
        if (!v) return false;
    return !cell_valid.empty();
}

TildeBridges solve_tilde_bridges(const DiscreteRows& rows, const ContrastSpec& c, double tol) {
    rows.validate();
    if (rows.n_z <= 0 || rows.n_w <= 0)
        throw schema_error("tilde bridges need instrument and proxy cells");
    TildeBridges out;
    out.arms = contrast_arms(c);
    if (out.arms.empty()) throw schema_error("contrast has no nonzero weights");

    const auto n_arms = out.arms.size();
    const auto n_vbins = static_cast<std::size_t>(rows.n_vbins);
    const auto n_z = static_cast<std::size_t>(rows.n_z);
    const auto n_w = static_cast<std::size_t>(rows.n_w);
    CellAccum acc(rows, out.arms);

    auto init_table = [&](CellBridgeTable& t, std::size_t n_cells) {
        t.n_arms = n_arms;
        t.n_vbins = n_vbins;
        t.n_cells = n_cells;
        t.coef.assign(n_arms * n_vbins * n_cells, 0.0);
        t.cell_defined.assign(n_arms * n_vbins * n_cells, 0);
        t.cell_valid.assign(n_arms * n_vbins, 0);
    };
    init_table(out.h, n_w);
    init_table(out.q, n_z);
    out.h_solutions.resize(n_arms * n_vbins);
    out.q_solutions.resize(n_arms * n_vbins);

    for (std::size_t k = 0; k < n_arms; ++k) {
        for (std::size_t v = 0; v < n_vbins; ++v) {
            std::size_t cell = k * n_vbins + v;

            std::vector<std::size_t> zs;
            for (std::size_t z = 0; z < n_z; ++z)
                if (acc.mass_abz(k, v, z) > 0.0) zs.push_back(z);
            if (zs.empty())
                throw support_error("empty (treatment, control-bin) cell: arm " +
                                    format_double(out.arms[k]) + ", bin " + std::to_string(v));

            std::vector<std::size_t> ws;
            for (std::size_t w = 0; w < n_w; ++w)
                if (acc.mass_bw[v * n_w + w] > 0.0) ws.push_back(w);
            for (std::size_t w : ws)
                if (acc.mass_abw(k, v, w) <= 0.0)
                    throw support_error(
                        "zero generalised propensity on the contrast support: arm " +
                        format_double(out.arms[k]) + ", bin " + std::to_string(v) +
                        ", proxy cell " + std::to_string(w));

            // Outcome bridge: h(arm, v, .) * P(W | arm, v, z) = E[Y | arm, v, z].
            // Conditions carry their cell mass so sparse z cells cannot
            // dominate the sample solve.
            linalg::Matrix pw_z(n_w, zs.size());
            std::vector<double> ey(zs.size()), z_mass(zs.size());
            for (std::size_t j = 0; j < zs.size(); ++j) {
                double mz = acc.mass_abz(k, v, zs[j]);
                z_mass[j] = mz;
                ey[j] = acc.ysum_abz[cell * n_z + zs[j]] / mz;
                for (std::size_t w = 0; w < n_w; ++w)
                    pw_z(w, j) = acc.mass_abzw[(cell * n_z + zs[j]) * n_w + w] / mz;
            }
            bridge::BridgeSolution hs = bridge::solve_h_cell(pw_z, ey, tol, z_mass);
            out.h_solutions[cell] = hs;
            out.h.max_residual = std::max(out.h.max_residual, hs.residual_norm);
            out.h.cell_valid[cell] = hs.valid() ? 1 : 0;
            for (std::size_t w = 0; w < n_w; ++w) {
                out.h.coef[cell * n_w + w] = hs.coeffs[w];
                out.h.cell_defined[cell * n_w + w] =
                    acc.mass_abw(k, v, w) > 0.0 ? 1 : 0;
            }

            // Action bridge: q(arm, v, .) * P(Z | arm, v, w) = 1 / f(arm | v, w).
            linalg::Matrix pz_w(zs.size(), ws.size());
            std::vector<double> f_vw(ws.size()), w_mass(ws.size());
            for (std::size_t j = 0; j < ws.size(); ++j) {
                double maw = acc.mass_abw(k, v, ws[j]);
                w_mass[j] = acc.mass_bw[v * n_w + ws[j]];
                f_vw[j] = maw / acc.mass_bw[v * n_w + ws[j]];
                for (std::size_t i = 0; i < zs.size(); ++i)
                    pz_w(i, j) = acc.mass_abzw[(cell * n_z + zs[i]) * n_w + ws[j]] / maw;
            }
            bridge::BridgeSolution qs = bridge::solve_q_cell(pz_w, f_vw, tol, w_mass);
            out.q.max_residual = std::max(out.q.max_residual, qs.residual_norm);
            out.q.cell_valid[cell] = qs.valid() ? 1 : 0;
            for (std::size_t i = 0; i < zs.size(); ++i) {
                out.q.coef[cell * n_z + zs[i]] = qs.coeffs[i];
                out.q.cell_defined[cell * n_z + zs[i]] = 1;
            }
            out.q_solutions[cell] = std::move(qs);
        }
    }
    return out;
}

double eval_tilde_ipw(const DiscreteRows& rows, const TildeBridges& b,
                      const CellBridgeTable& q, const ContrastSpec& c) {
    std::vector<double> pim = arm_weights(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.n(); ++i) {
        int k = arm_index(b.arms, rows.a[i]);
        if (k < 0) continue;
        auto v = static_cast<std::size_t>(rows.vbin[i]);
        auto z = static_cast<std::size_t>(rows.z[i]);
        acc += rows.weight[i] * rows.y[i] * pim[static_cast<std::size_t>(k)] *
               q.at(static_cast<std::size_t>(k), v, z);
    }
    return acc;
}

double eval_tilde_reg(const DiscreteRows& rows, const TildeBridges& b,
                      const CellBridgeTable& h, const ContrastSpec& c) {
    std::vector<double> pim = arm_weights(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.n(); ++i) {
        auto v = static_cast<std::size_t>(rows.vbin[i]);
        auto w = static_cast<std::size_t>(rows.w[i]);
        double th = 0.0;
        for (std::size_t k = 0; k < b.arms.size(); ++k) th += pim[k] * h.at(k, v, w);
        acc += rows.weight[i] * th;
    }
    return acc;
}

double eval_tilde_dr(const DiscreteRows& rows, const TildeBridges& b,
                     const CellBridgeTable& h, const CellBridgeTable& q,
                     const ContrastSpec& c) {
    std::vector<double> pim = arm_weights(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.n(); ++i) {
        auto v = static_cast<std::size_t>(rows.vbin[i]);
        auto w = static_cast<std::size_t>(rows.w[i]);
        auto z = static_cast<std::size_t>(rows.z[i]);
        double th = 0.0;
        for (std::size_t k = 0; k < b.arms.size(); ++k) th += pim[k] * h.at(k, v, w);
        double value = th;
        int k = arm_index(b.arms, rows.a[i]);
        if (k >= 0) {
            auto ks = static_cast<std::size_t>(k);
            value += (rows.y[i] - h.at(ks, v, w)) * pim[ks] * q.at(ks, v, z);
        }
        acc += rows.weight[i] * value;
    }
    return acc;
}

namespace {

void require_valid(const CellBridgeTable& t, const char* what) {
    if (!t.all_valid())
        throw identification_error(std::string(what) +
                                   " bridge residual above tolerance: completeness likely "
                                   "violated");
}

EstimateReport make_report(std::string name, double j, const DiscreteRows& rows,
                           const TildeBridges& b) {
    EstimateReport rep;
    rep.estimator = std::move(name);
    rep.j_hat = j;
    rep.n_used = rows.n();
    rep.diagnostics.emplace_back("h_max_residual", b.h.max_residual);
    rep.diagnostics.emplace_back("q_max_residual", b.q.max_residual);
    return rep;
}

}  // namespace

EstimateReport tilde_phi_ipw(const DiscreteRows& rows, const TildeBridges& b,
                             const ContrastSpec& c) {
    require_valid(b.q, "action");
    return make_report("tilde_ipw", eval_tilde_ipw(rows, b, b.q, c), rows, b);
}

EstimateReport tilde_phi_reg(const DiscreteRows& rows, const TildeBridges& b,
                             const ContrastSpec& c) {
    require_valid(b.h, "outcome");
    return make_report("tilde_reg", eval_tilde_reg(rows, b, b.h, c), rows, b);
}

EstimateReport tilde_phi_dr(const DiscreteRows& rows, const TildeBridges& b,
                            const ContrastSpec& c) {
    require_valid(b.h, "outcome");
    require_valid(b.q, "action");
    return make_report("tilde_dr", eval_tilde_dr(rows, b, b.h, b.q, c), rows, b);
}

namespace {

// Frequency tables on (arm, vbin, u) cells for the observed-confounder
// estimators.
struct PhiTables {
    std::vector<double> arms;
    std::vector<double> pim;
    std::size_t n_vbins, n_u;
    std::vector<double> mass_vu;   // v*n_u+u
    std::vector<double> mass_avu;  // (arm*n_vbins+v)*n_u+u
    std::vector<double> ysum_avu;
    const std::vector<double>* supplied_f = nullptr;

    double f(std::size_t k, std::size_t v, std::size_t u) const {
        if (supplied_f) return (*supplied_f)[(k * n_vbins + v) * n_u + u];
        return mass_avu[(k * n_vbins + v) * n_u + u] / mass_vu[v * n_u + u];
    }
    double kmean(std::size_t k, std::size_t v, std::size_t u) const {
        return ysum_avu[(k * n_vbins + v) * n_u + u] /
               mass_avu[(k * n_vbins + v) * n_u + u];
    }
};

PhiTables phi_tables(const DiscreteRows& rows, const ContrastSpec& c, const PhiOptions& opt) {
    rows.validate();
    if (rows.n_u <= 0)
        throw schema_error("observed-confounder estimators need a latent confounder column");
    PhiTables t;
    t.arms = contrast_arms(c);
    t.pim = arm_weights(c);
    if (t.arms.empty()) throw schema_error("contrast has no nonzero weights");
    t.n_vbins = static_cast<std::size_t>(rows.n_vbins);
    t.n_u = static_cast<std::size_t>(rows.n_u);
    t.mass_vu.assign(t.n_vbins * t.n_u, 0.0);
    t.mass_avu.assign(t.arms.size() * t.n_vbins * t.n_u, 0.0);
    t.ysum_avu.assign(t.arms.size() * t.n_vbins * t.n_u, 0.0);
    for (std::size_t i = 0; i < rows.n(); ++i) {
        auto v = static_cast<std::size_t>(rows.vbin[i]);
        auto u = static_cast<std::size_t>(rows.u[i]);
        t.mass_vu[v * t.n_u + u] += rows.weight[i];
        int k = arm_index(t.arms, rows.a[i]);
        if (k < 0) continue;
        std::size_t cell = (static_cast<std::size_t>(k) * t.n_vbins + v) * t.n_u + u;
        t.mass_avu[cell] += rows.weight[i];
        t.ysum_avu[cell] += rows.weight[i] * rows.y[i];
    }
    t.supplied_f = opt.propensity;

    // Common support: every populated (v, u) cell must reach every arm.
    for (std::size_t v = 0; v < t.n_vbins; ++v)
        for (std::size_t u = 0; u < t.n_u; ++u) {
            if (t.mass_vu[v * t.n_u + u] <= 0.0) continue;
            for (std::size_t k = 0; k < t.arms.size(); ++k)
                if (t.mass_avu[(k * t.n_vbins + v) * t.n_u + u] <= 0.0)
                    throw support_error(
                        "zero generalised propensity on the contrast support: arm " +
                        format_double(t.arms[k]) + ", control bin " + std::to_string(v) +
                        ", confounder cell " + std::to_string(u));
        }
    return t;
}

EstimateReport phi_report(std::string name, double j, const DiscreteRows& rows) {
    EstimateReport rep;
    rep.estimator = std::move(name);
    rep.j_hat = j;
    rep.n_used = rows.n();
    return rep;
}

}  // namespace

EstimateReport phi_ipw(const DiscreteRows& rows, const ContrastSpec& c, PhiOptions opt) {
    PhiTables t = phi_tables(rows, c, opt);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.n(); ++i) {
        int k = arm_index(t.arms, rows.a[i]);
        if (k < 0) continue;
        auto ks = static_cast<std::size_t>(k);
        auto v = static_cast<std::size_t>(rows.vbin[i]);
        auto u = static_cast<std::size_t>(rows.u[i]);
        acc += rows.weight[i] * rows.y[i] * t.pim[ks] / t.f(ks, v, u);
    }
    return phi_report("phi_ipw", acc, rows);
}

EstimateReport phi_reg(const DiscreteRows& rows, const ContrastSpec& c, PhiOptions opt) {
    PhiTables t = phi_tables(rows, c, opt);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.n(); ++i) {
        auto v = static_cast<std::size_t>(rows.vbin[i]);
        auto u = static_cast<std::size_t>(rows.u[i]);
        double inner = 0.0;
        for (std::size_t k = 0; k < t.arms.size(); ++k) inner += t.pim[k] * t.kmean(k, v, u);
        acc += rows.weight[i] * inner;
    }
    return phi_report("phi_reg", acc, rows);
}

EstimateReport phi_dr(const DiscreteRows& rows, const ContrastSpec& c, PhiOptions opt) {
    PhiTables t = phi_tables(rows, c, opt);
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.n(); ++i) {
        auto v = static_cast<std::size_t>(rows.vbin[i]);
        auto u = static_cast<std::size_t>(rows.u[i]);
        double inner = 0.0;
        for (std::size_t k = 0; k < t.arms.size(); ++k) inner += t.pim[k] * t.kmean(k, v, u);
        double value = inner;
        int k = arm_index(t.arms, rows.a[i]);
        if (k >= 0) {
            auto ks = static_cast<std::size_t>(k);
            value += (rows.y[i] - t.kmean(ks, v, u)) * t.pim[ks] / t.f(ks, v, u);
        }
        acc += rows.weight[i] * value;
    }
    return phi_report("phi_dr", acc, rows);
}

IdentityPair bias_identity_ipw(const DiscreteRows& rows, const TildeBridges& b,
                               const CellBridgeTable& q_plugin, const ContrastSpec& c,
                               double j_true) {
    std::vector<double> pim = arm_weights(c);
    CellAccum acc(rows, b.arms);
    IdentityPair out;
    out.lhs = eval_tilde_ipw(rows, b, q_plugin, c) - j_true;
    // E[h0(A,V,W) * pi(A) (q - 1/f(A|V,W))] via the tower property.
    for (std::size_t i = 0; i < rows.n(); ++i) {
        int k = arm_index(b.arms, rows.a[i]);
        if (k < 0) continue;
        auto ks = static_cast<std::size_t>(k);
        auto v = static_cast<std::size_t>(rows.vbin[i]);
        auto w = static_cast<std::size_t>(rows.w[i]);
        auto z = static_cast<std::size_t>(rows.z[i]);
        double f = acc.mass_abw(ks, v, w) / acc.mass_bw[v * acc.n_w + w];
        out.rhs += rows.weight[i] * b.h.at(ks, v, w) * pim[ks] *
                   (q_plugin.at(ks, v, z) - 1.0 / f);
    }
    return out;
}

IdentityPair bias_identity_reg(const DiscreteRows& rows, const TildeBridges& b,
                               const CellBridgeTable& h_plugin, const ContrastSpec& c,
                               double j_true) {
    std::vector<double> pim = arm_weights(c);
    IdentityPair out;
    out.lhs = eval_tilde_reg(rows, b, h_plugin, c) - j_true;
    // E[pi(A) q0(A,V,Z) * (h(A,V,W) - Y)] via the tower property.
    for (std::size_t i = 0; i < rows.n(); ++i) {
        int k = arm_index(b.arms, rows.a[i]);
        if (k < 0) continue;
        auto ks = static_cast<std::size_t>(k);
        auto v = static_cast<std::size_t>(rows.vbin[i]);
        auto w = static_cast<std::size_t>(rows.w[i]);
        auto z = static_cast<std::size_t>(rows.z[i]);
        out.rhs += rows.weight[i] * pim[ks] * b.q.at(ks, v, z) *
                   (h_plugin.at(ks, v, w) - rows.y[i]);
    }
    return out;
}

McTable run_mc(const std::vector<std::string>& estimator_names, double truth, std::size_t R,
               std::size_t n, std::uint64_t seed,
               const std::function<McReplication(std::uint64_t rep_seed)>& replicate) {
    if (R < 1) throw schema_error("run_mc: R must be >= 1");
    if (n < 10) throw schema_error("run_mc: n must be >= 10");

    McTable table;
    table.truth = truth;
    table.replications = R;
    table.n = n;
    table.seed = seed;

    std::size_t m = estimator_names.size();
    std::vector<std::vector<double>> estimates(m);
    std::vector<double> se_sum(m, 0.0);
    std::vector<std::size_t> covered(m, 0), with_se(m, 0), failures(m, 0);

    for (std::size_t rep = 0; rep < R; ++rep) {
        McReplication result = replicate(seed + rep);
        if (result.size() != m) throw schema_error("run_mc: replication size mismatch");
        for (std::size_t e = 0; e < m; ++e) {
            if (!result[e]) {
                ++failures[e];
                continue;
            }
            estimates[e].push_back(result[e]->first);
            if (result[e]->second) {
                ++with_se[e];
                double se = *result[e]->second;
                se_sum[e] += se;
                double lo = result[e]->first - 1.959963984540054 * se;
                double hi = result[e]->first + 1.959963984540054 * se;
                if (truth >= lo && truth <= hi) ++covered[e];
            }
        }
    }

    for (std::size_t e = 0; e < m; ++e) {
        McRow row;
        row.estimator = estimator_names[e];
        row.failures = failures[e];
        row.r_completed = estimates[e].size();
        if (!estimates[e].empty()) {
            double mean = 0.0;
            for (double v : estimates[e]) mean += v;
            mean /= static_cast<double>(estimates[e].size());
            double var = 0.0, mse = 0.0;
            for (double v : estimates[e]) {
                var += (v - mean) * (v - mean);
                mse += (v - truth) * (v - truth);
            }
            var /= static_cast<double>(estimates[e].size());
            mse /= static_cast<double>(estimates[e].size());
            row.mean = mean;
            row.bias = mean - truth;
            row.sd = std::sqrt(var);
            row.rmse = std::sqrt(mse);
        }
        if (with_se[e] > 0) {
            row.coverage = static_cast<double>(covered[e]) / static_cast<double>(with_se[e]);
            row.mean_se = se_sum[e] / static_cast<double>(with_se[e]);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_mc_csv(std::ostream& os, const McTable& t) {
    os << "estimator,mean,bias,sd,rmse,coverage,replications,failures,n,seed,truth\n";
    for (const auto& r : t.rows) {
        os << r.estimator << "," << format_double(r.mean) << "," << format_double(r.bias)
           << "," << format_double(r.sd) << "," << format_double(r.rmse) << ","
           << (r.coverage ? format_double(*r.coverage) : std::string("")) << ","
           << r.r_completed << "," << r.failures << "," << t.n << "," << t.seed << ","
           << format_double(t.truth) << "\n";
    }
}

void write_mc_markdown(std::ostream& os, const McTable& t) {
    os << "| estimator | mean | bias | sd | rmse | coverage | R | failures |\n";
    os << "|---|---|---|---|---|---|---|---|\n";
    char buf[64];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return std::string(buf);
    };
    for (const auto& r : t.rows) {
        os << "| " << r.estimator << " | " << fmt(r.mean) << " | " << fmt(r.bias) << " | "
           << fmt(r.sd) << " | " << fmt(r.rmse) << " | "
           << (r.coverage ? fmt(*r.coverage) : std::string("-")) << " | " << r.r_completed
           << " | " << r.failures << " |\n";
    }
    os << "\n";
    os << "truth = " << fmt(t.truth) << ", n = " << t.n << ", seed = " << t.seed << "\n";
}

}  // namespace icc::estimators
