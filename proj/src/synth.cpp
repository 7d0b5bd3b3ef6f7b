#include "icc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "icc/errors.hpp"
#include "icc/rng.hpp"

namespace icc::synth {

namespace {

constexpr double kMassTol = 1e-12;

std::vector<double> floored_dirichlet(rng::Rng& r, std::size_t k, double floor_value) {
    std::vector<double> q = r.dirichlet(k, 1.0);
    if (floor_value > 0.0) {
        double sum = 0.0;
        for (auto& v : q) {
            v = std::max(v, floor_value);
            sum += v;
        }
        for (auto& v : q) v /= sum;
    }
    return q;
}

}  // namespace

const char* axis_name(Axis axis) {
    switch (axis) {
        case Axis::U: return "u";
        case Axis::Z: return "z";
        case Axis::A: return "a";
        case Axis::W: return "w";
    }
    return "?";
}

std::string LabeledMatrix::row_label(std::size_t i) const {
    std::string out;
    std::size_t rem = i;
    for (std::size_t k = row_axes.size(); k-- > 0;) {
        std::size_t idx = rem % row_dims[k];
        rem /= row_dims[k];
        std::string part = std::string(axis_name(row_axes[k])) + std::to_string(idx);
        out = out.empty() ? part : part + "," + out;
    }
    return out;
}

std::string LabeledMatrix::col_label(std::size_t j) const {
    std::string out;
    std::size_t rem = j;
    for (std::size_t k = col_axes.size(); k-- > 0;) {
        std::size_t idx = rem % col_dims[k];
        rem /= col_dims[k];
        std::string part = std::string(axis_name(col_axes[k])) + std::to_string(idx);
        out = out.empty() ? part : part + "," + out;
    }
    return out;
}

void DiscretePopulation::validate() const {
    if (d_u == 0 || d_z == 0 || d_a == 0 || d_w == 0)
        throw schema_error("population dims must all be >= 1");
    if (p.size() != d_u * d_z * d_a * d_w) throw schema_error("tensor size mismatch");
    if (k0.size() != d_a * d_u) throw schema_error("k0 table size mismatch");
    double total = 0.0;
    for (double v : p) {
        if (v < 0.0) throw schema_error("negative probability mass");
        total += v;
    }
    if (std::abs(total - 1.0) > kMassTol)
        throw schema_error("probability tensor does not sum to 1");
    if (y_noise_sd < 0.0) throw schema_error("negative outcome noise sd");
}

std::vector<double> DiscretePopulation::marginal(Axis axis) const {
    std::size_t dim;
    switch (axis) {
        case Axis::U: dim = d_u; break;
        case Axis::Z: dim = d_z; break;
        case Axis::A: dim = d_a; break;
        default: dim = d_w; break;
    }
    std::vector<double> out(dim, 0.0);
    for (std::size_t u = 0; u < d_u; ++u)
        for (std::size_t z = 0; z < d_z; ++z)
            for (std::size_t a = 0; a < d_a; ++a)
                for (std::size_t w = 0; w < d_w; ++w) {
                    std::size_t idx;
                    switch (axis) {
                        case Axis::U: idx = u; break;
                        case Axis::Z: idx = z; break;
                        case Axis::A: idx = a; break;
                        default: idx = w; break;
                    }
                    out[idx] += prob(u, z, a, w);
                }
    return out;
}

ConditionalVector DiscretePopulation::ey_given_z() const {
    ConditionalVector out;
    out.values.assign(d_z, 0.0);
    out.defined.assign(d_z, false);
    std::vector<double> pz(d_z, 0.0);
    for (std::size_t u = 0; u < d_u; ++u)
        for (std::size_t z = 0; z < d_z; ++z)
            for (std::size_t a = 0; a < d_a; ++a)
                for (std::size_t w = 0; w < d_w; ++w) {
                    double m = prob(u, z, a, w);
                    pz[z] += m;
                    out.values[z] += m * k0_at(a, u);
                }
    for (std::size_t z = 0; z < d_z; ++z) {
        if (pz[z] > 0.0) {
            out.values[z] /= pz[z];
            out.defined[z] = true;
        } else {
            out.values[z] = 0.0;
        }
    }
    return out;
}

DiscretePopulation random_population(std::size_t d_u, std::size_t d_z, std::size_t d_a,
                                     std::size_t d_w, std::uint64_t seed,
                                     double support_floor) {
    if (d_u == 0 || d_z == 0 || d_a == 0 || d_w == 0)
        throw schema_error("random_population: dims must all be >= 1");
    double cells = static_cast<double>(d_u * d_z * d_a * d_w);
    if (support_floor < 0.0 || support_floor > 0.5 / cells)
        throw schema_error("random_population: support_floor out of range");

    rng::Rng r(seed);
    std::vector<double> pu = floored_dirichlet(r, d_u, support_floor);
    std::vector<std::vector<double>> pz_u(d_u);
    for (std::size_t u = 0; u < d_u; ++u) pz_u[u] = floored_dirichlet(r, d_z, support_floor);
    std::vector<std::vector<double>> pa_zu(d_u * d_z);
    for (std::size_t u = 0; u < d_u; ++u)
        for (std::size_t z = 0; z < d_z; ++z)
            pa_zu[u * d_z + z] = floored_dirichlet(r, d_a, support_floor);
    std::vector<std::vector<double>> pw_u(d_u);
    for (std::size_t u = 0; u < d_u; ++u) pw_u[u] = floored_dirichlet(r, d_w, support_floor);

    DiscretePopulation pop;
    pop.d_u = d_u;
    pop.d_z = d_z;
    pop.d_a = d_a;
    pop.d_w = d_w;
    pop.p.assign(d_u * d_z * d_a * d_w, 0.0);
    for (std::size_t u = 0; u < d_u; ++u)
        for (std::size_t z = 0; z < d_z; ++z)
            for (std::size_t a = 0; a < d_a; ++a)
                for (std::size_t w = 0; w < d_w; ++w)
                    pop.prob(u, z, a, w) =
                        pu[u] * pz_u[u][z] * pa_zu[u * d_z + z][a] * pw_u[u][w];

    pop.k0.resize(d_a * d_u);
    for (auto& v : pop.k0) v = r.uniform(-1.0, 1.0);
    pop.y_noise_sd = 0.0;

    // Normalize away accumulated rounding so validate() is exact.
    double total = std::accumulate(pop.p.begin(), pop.p.end(), 0.0);
    for (auto& v : pop.p) v /= total;
    return pop;
}

double true_J(const DiscretePopulation& pop, const ContrastSpec& c) {
    for (std::size_t j = 0; j < c.support.size(); ++j) {
        if (c.weights[j] == 0.0) continue;
        double a = c.support[j];
        if (a != std::floor(a) || a < 0.0 || a >= static_cast<double>(pop.d_a))
            throw schema_error("contrast value outside treatment codebook");
    }
    std::vector<double> pu = pop.marginal(Axis::U);
    std::vector<double> mu = c.measure();
    double j_val = 0.0;
    for (std::size_t u = 0; u < pop.d_u; ++u) {
        double inner = 0.0;
        for (std::size_t j = 0; j < c.support.size(); ++j) {
            if (c.weights[j] == 0.0) continue;
            auto a = static_cast<std::size_t>(c.support[j]);
            inner += c.weights[j] * mu[j] * pop.k0_at(a, u);
        }
        j_val += pu[u] * inner;
    }
    return j_val;
}

LabeledMatrix cond_matrix(const DiscretePopulation& pop, const std::vector<Axis>& target,
                          const std::vector<Axis>& given) {
    for (Axis t : target)
        for (Axis g : given)
            if (t == g) throw schema_error("cond_matrix: target and given must be disjoint");

    auto dim_of = [&](Axis ax) {
        switch (ax) {
            case Axis::U: return pop.d_u;
            case Axis::Z: return pop.d_z;
            case Axis::A: return pop.d_a;
            default: return pop.d_w;
        }
    };

    LabeledMatrix lm;
    lm.row_axes = target;
    lm.col_axes = given;
    std::size_t n_rows = 1, n_cols = 1;
    for (Axis ax : target) {
        lm.row_dims.push_back(dim_of(ax));
        n_rows *= dim_of(ax);
    }
    for (Axis ax : given) {
        lm.col_dims.push_back(dim_of(ax));
        n_cols *= dim_of(ax);
    }
    lm.m = linalg::Matrix(n_rows, n_cols);
    std::vector<double> col_mass(n_cols, 0.0);

    std::size_t idx_of[4];
    for (std::size_t u = 0; u < pop.d_u; ++u)
        for (std::size_t z = 0; z < pop.d_z; ++z)
            for (std::size_t a = 0; a < pop.d_a; ++a)
                for (std::size_t w = 0; w < pop.d_w; ++w) {
                    idx_of[0] = u;
                    idx_of[1] = z;
                    idx_of[2] = a;
                    idx_of[3] = w;
                    auto cell_index = [&](const std::vector<Axis>& axes) {
                        std::size_t idx = 0;
                        for (Axis ax : axes)
                            idx = idx * dim_of(ax) + idx_of[static_cast<int>(ax)];
                        return idx;
                    };
                    double mass = pop.prob(u, z, a, w);
                    std::size_t ri = cell_index(target);
                    std::size_t ci = cell_index(given);
                    lm.m(ri, ci) += mass;
                    col_mass[ci] += mass;
                }

    lm.col_defined.assign(n_cols, false);
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (col_mass[c] > 0.0) {
            lm.col_defined[c] = true;
            for (std::size_t rr = 0; rr < n_rows; ++rr) lm.m(rr, c) /= col_mass[c];
        }
    }
    return lm;
}

RankResult completeness_rank(const linalg::Matrix& m, double tol) {
    if (m.empty()) throw schema_error("completeness_rank: empty matrix");
    if (tol <= 0.0) throw schema_error("completeness_rank: tol must be positive");
    linalg::Svd s = linalg::svd(m);
    RankResult out;
    out.rank = linalg::svd_rank(s, tol);
    out.full_column_rank = out.rank == m.cols;
    return out;
}

RankResult completeness_rank(const LabeledMatrix& m, double tol) {
    return completeness_rank(m.m, tol);
}

Dataset sample_discrete(const DiscretePopulation& pop, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw schema_error("sample_discrete: n must be >= 1");
    pop.validate();
    rng::Rng r(seed);

    Dataset ds;
    ds.simulated = true;
    auto add = [&](const std::string& name, VariableRole role, ColumnKind kind) {
        Column c;
        c.name = name;
        c.role = role;
        c.kind = kind;
        c.values.reserve(n);
        ds.columns.push_back(std::move(c));
        return ds.columns.size() - 1;
    };
    std::size_t iy = add("y", VariableRole::outcome, ColumnKind::continuous);
    std::size_t ia = add("a", VariableRole::treatment, ColumnKind::categorical);
    std::size_t iz = add("z", VariableRole::instrument, ColumnKind::categorical);
    std::size_t iw = add("w", VariableRole::outcome_proxy, ColumnKind::categorical);
    std::size_t iu = add("u", VariableRole::latent_confounder, ColumnKind::categorical);

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t cell = r.categorical(pop.p);
        std::size_t w = cell % pop.d_w;
        cell /= pop.d_w;
        std::size_t a = cell % pop.d_a;
        cell /= pop.d_a;
        std::size_t z = cell % pop.d_z;
        std::size_t u = cell / pop.d_z;
        double y = pop.k0_at(a, u);
        if (pop.y_noise_sd > 0.0) y += pop.y_noise_sd * r.normal();
        ds.columns[iy].values.push_back(y);
        ds.columns[ia].values.push_back(static_cast<double>(a));
        ds.columns[iz].values.push_back(static_cast<double>(z));
        ds.columns[iw].values.push_back(static_cast<double>(w));
        ds.columns[iu].values.push_back(static_cast<double>(u));
    }
    return ds;
}

void LinearDGPSpec::validate() const {
    if (beta.size() != d_a || gamma_y.size() != d_u || zeta.size() != d_w)
        throw config_error("linear spec: coefficient vector dims inconsistent");
    if (gamma_a.rows != d_u || gamma_a.cols != d_a || gamma_w.rows != d_u ||
        gamma_w.cols != d_w)
        throw config_error("linear spec: gamma matrix dims inconsistent");
    if (pi_fs.rows != d_z || pi_fs.cols != d_a || gamma_tilde_z.rows != d_z ||
        gamma_tilde_z.cols != d_u)
        throw config_error("linear spec: first-stage matrix dims inconsistent");
    std::size_t ne = 1 + d_a + d_w + d_u;
    if (sigma_z.rows != d_z || sigma_z.cols != d_z)
        throw config_error("linear spec: sigma_z dims inconsistent");
    if (noise_cov.rows != ne || noise_cov.cols != ne)
        throw config_error("linear spec: noise_cov dims inconsistent");
    auto check_sym_psd = [](const linalg::Matrix& m, const char* what) {
        for (std::size_t i = 0; i < m.rows; ++i)
            for (std::size_t j = 0; j < m.cols; ++j)
                if (std::abs(m(i, j) - m(j, i)) > 1e-12)
                    throw config_error(std::string("linear spec: ") + what + " not symmetric");
        try {
            linalg::cholesky_lower(m);
        } catch (const error&) {
            throw config_error(std::string("linear spec: ") + what +
                               " not positive semidefinite");
        }
    };
    check_sym_psd(sigma_z, "sigma_z");
    check_sym_psd(noise_cov, "noise_cov");
}

LinearDGPSpec LinearDGPSpec::confounded_example() {
    LinearDGPSpec s;
    s.d_a = 1;
    s.d_u = 1;
    s.d_z = 2;
    s.d_w = 1;
    s.beta = {1.0};
    s.gamma_y = {1.0};
    s.gamma_a = linalg::Matrix(1, 1);
    s.gamma_a(0, 0) = 1.0;
    s.gamma_w = linalg::Matrix(1, 1);
    s.gamma_w(0, 0) = 1.0;
    s.zeta = {0.5};
    s.pi_fs = linalg::Matrix(2, 1);
    s.pi_fs(0, 0) = 1.0;
    s.pi_fs(1, 0) = 0.5;
    s.gamma_tilde_z = linalg::Matrix(2, 1);
    s.gamma_tilde_z(0, 0) = 0.3;
    s.gamma_tilde_z(1, 0) = -0.2;
    s.sigma_z = linalg::Matrix::identity(2);
    s.noise_cov = linalg::Matrix::identity(4);
    return s;
}

Dataset sample_linear(const LinearDGPSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    rng::Rng r(seed);
    linalg::Matrix lz = linalg::cholesky_lower(spec.sigma_z);
    linalg::Matrix le = linalg::cholesky_lower(spec.noise_cov);
    std::size_t ne = le.rows;

    Dataset ds;
    ds.simulated = true;
    auto add = [&](const std::string& name, VariableRole role) {
        Column c;
        c.name = name;
        c.role = role;
        c.kind = ColumnKind::continuous;
        c.values.reserve(n);
        ds.columns.push_back(std::move(c));
        return ds.columns.size() - 1;
    };
    auto indexed = [](const std::string& base, std::size_t k, std::size_t d) {
        return d == 1 && (base == "a" || base == "u") ? base : base + std::to_string(k + 1);
    };

    std::size_t iy = add("y", VariableRole::outcome);
    std::vector<std::size_t> ia, iz, iw, iu;
    for (std::size_t k = 0; k < spec.d_a; ++k)
        ia.push_back(add(indexed("a", k, spec.d_a), VariableRole::treatment));
    for (std::size_t k = 0; k < spec.d_z; ++k)
        iz.push_back(add("z" + std::to_string(k + 1), VariableRole::instrument));
    for (std::size_t k = 0; k < spec.d_w; ++k)
        iw.push_back(add("w" + std::to_string(k + 1), VariableRole::outcome_proxy));
    for (std::size_t k = 0; k < spec.d_u; ++k)
        iu.push_back(add(indexed("u", k, spec.d_u), VariableRole::latent_confounder));

    std::vector<double> draws(std::max(spec.d_z, ne));
    std::vector<double> z(spec.d_z), e(ne), u(spec.d_u), a(spec.d_a), w(spec.d_w);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < spec.d_z; ++k) draws[k] = r.normal();
        for (std::size_t k = 0; k < spec.d_z; ++k) {
            double s = 0.0;
            for (std::size_t l = 0; l <= k; ++l) s += lz(k, l) * draws[l];
            z[k] = s;
        }
        for (std::size_t k = 0; k < ne; ++k) draws[k] = r.normal();
        for (std::size_t k = 0; k < ne; ++k) {
            double s = 0.0;
            for (std::size_t l = 0; l <= k; ++l) s += le(k, l) * draws[l];
            e[k] = s;
        }
        double e_y = e[0];
        const double* e_a = &e[1];
        const double* e_w = &e[1 + spec.d_a];
        const double* e_u = &e[1 + spec.d_a + spec.d_w];

        for (std::size_t k = 0; k < spec.d_u; ++k) {
            double s = e_u[k];
            for (std::size_t l = 0; l < spec.d_z; ++l) s += z[l] * spec.gamma_tilde_z(l, k);
            u[k] = s;
        }
        for (std::size_t k = 0; k < spec.d_a; ++k) {
            double s = e_a[k];
            for (std::size_t l = 0; l < spec.d_z; ++l) s += z[l] * spec.pi_fs(l, k);
            for (std::size_t l = 0; l < spec.d_u; ++l) s += u[l] * spec.gamma_a(l, k);
            a[k] = s;
        }
        for (std::size_t k = 0; k < spec.d_w; ++k) {
            double s = e_w[k];
            for (std::size_t l = 0; l < spec.d_u; ++l) s += u[l] * spec.gamma_w(l, k);
            w[k] = s;
        }
        double y = e_y;
        for (std::size_t k = 0; k < spec.d_a; ++k) y += a[k] * spec.beta[k];
        for (std::size_t k = 0; k < spec.d_u; ++k) y += u[k] * spec.gamma_y[k];
        for (std::size_t k = 0; k < spec.d_w; ++k) y += w[k] * spec.zeta[k];

        ds.columns[iy].values.push_back(y);
        for (std::size_t k = 0; k < spec.d_a; ++k) ds.columns[ia[k]].values.push_back(a[k]);
        for (std::size_t k = 0; k < spec.d_z; ++k) ds.columns[iz[k]].values.push_back(z[k]);
        for (std::size_t k = 0; k < spec.d_w; ++k) ds.columns[iw[k]].values.push_back(w[k]);
        for (std::size_t k = 0; k < spec.d_u; ++k) ds.columns[iu[k]].values.push_back(u[k]);
    }
    return ds;
}

void FirstStagePopulation::validate() const {
    if (d_u == 0 || d_z == 0 || d_w0 == 0 || d_w1 == 0 || n_grid == 0)
        throw schema_error("first-stage population dims must all be >= 1");
    if (p.size() != d_u * d_z * d_w0 * d_w1)
        throw schema_error("first-stage tensor size mismatch");
    double total = std::accumulate(p.begin(), p.end(), 0.0);
    if (std::abs(total - 1.0) > kMassTol)
        throw schema_error("first-stage tensor does not sum to 1");
    for (double v : p)
        if (v < 0.0) throw schema_error("negative probability mass");

    if (eta_grid.size() != n_grid) throw schema_error("eta grid size mismatch");
    for (std::size_t g = 0; g + 1 < n_grid; ++g)
        if (!(eta_grid[g] < eta_grid[g + 1]))
            throw schema_error("eta grid not strictly increasing");

    if (eta_weights.rows != d_u || eta_weights.cols != n_grid)
        throw schema_error("eta weight table dims mismatch");
    for (std::size_t u = 0; u < d_u; ++u) {
        double s = 0.0;
        for (std::size_t g = 0; g < n_grid; ++g) {
            if (eta_weights(u, g) <= 0.0)
                throw schema_error("eta weights must be strictly positive");
            s += eta_weights(u, g);
        }
        if (std::abs(s - 1.0) > kMassTol)
            throw schema_error("eta weight row does not sum to 1");
    }

    if (m_form.rows != d_u || m_form.cols != n_grid)
        throw schema_error("m_form dims mismatch");
    for (std::size_t u = 0; u < d_u; ++u)
        for (std::size_t g = 0; g + 1 < n_grid; ++g)
            if (!(m_form(u, g) < m_form(u, g + 1)))
                throw schema_error("m_form not strictly increasing in eta for u=" +
                                   std::to_string(u));

    if (h_form.rows != d_z || h_form.cols != m_levels.size())
        throw schema_error("h_form dims mismatch");
    for (std::size_t z = 0; z < d_z; ++z)
        for (std::size_t j = 0; j + 1 < m_levels.size(); ++j)
            if (!(h_form(z, j) < h_form(z, j + 1)))
                throw schema_error("h_form not strictly increasing in m for z=" +
                                   std::to_string(z));
    for (std::size_t j = 0; j + 1 < m_levels.size(); ++j)
        if (!(m_levels[j] < m_levels[j + 1]))
            throw schema_error("m_levels not sorted");
    for (std::size_t u = 0; u < d_u; ++u)
        for (std::size_t g = 0; g < n_grid; ++g) m_level_index(m_form(u, g));

    if (k0v.size() != a_levels.size() * n_grid * d_u)
        throw schema_error("k0v table size mismatch");
    if (y_noise_sd < 0.0) throw schema_error("negative outcome noise sd");
}

std::size_t FirstStagePopulation::m_level_index(double m) const {
    auto it = std::lower_bound(m_levels.begin(), m_levels.end(), m);
    if (it == m_levels.end() || *it != m)
        throw schema_error("m value not on the tabulated grid");
    return static_cast<std::size_t>(it - m_levels.begin());
}

std::size_t FirstStagePopulation::a_level_index(double a) const {
    auto it = std::lower_bound(a_levels.begin(), a_levels.end(), a);
    if (it == a_levels.end() || *it != a)
        throw schema_error("treatment value not in the population codebook");
    return static_cast<std::size_t>(it - a_levels.begin());
}

bool FirstStagePopulation::has_a_level(double a) const {
    auto it = std::lower_bound(a_levels.begin(), a_levels.end(), a);
    return it != a_levels.end() && *it == a;
}

double FirstStagePopulation::a_code(std::size_t u, std::size_t z, std::size_t g) const {
    return h_form(z, m_level_index(m_form(u, g)));
}

std::vector<double> FirstStagePopulation::marginal_u() const {
    std::vector<double> pu(d_u, 0.0);
    for (std::size_t u = 0; u < d_u; ++u)
        for (std::size_t z = 0; z < d_z; ++z)
            for (std::size_t w0 = 0; w0 < d_w0; ++w0)
                for (std::size_t w1 = 0; w1 < d_w1; ++w1) pu[u] += joint(u, z, w0, w1);
    return pu;
}

std::vector<double> FirstStagePopulation::marginal_z() const {
    std::vector<double> pz(d_z, 0.0);
    for (std::size_t u = 0; u < d_u; ++u)
        for (std::size_t z = 0; z < d_z; ++z)
            for (std::size_t w0 = 0; w0 < d_w0; ++w0)
                for (std::size_t w1 = 0; w1 < d_w1; ++w1) pz[z] += joint(u, z, w0, w1);
    return pz;
}

double FirstStagePopulation::f_mid(double a, std::size_t z, std::size_t u) const {
    double below = 0.0, at = 0.0;
    for (std::size_t g = 0; g < n_grid; ++g) {
        double code = a_code(u, z, g);
        if (code < a)
            below += eta_weights(u, g);
        else if (code == a)
            at += eta_weights(u, g);
    }
    return below + 0.5 * at;
}

double FirstStagePopulation::oracle_v(std::size_t u, std::size_t z, std::size_t g) const {
    return f_mid(a_code(u, z, g), z, u);
}

double FirstStagePopulation::control_quantity_value(double a, std::size_t z) const {
    std::vector<double> pu = marginal_u();
    double v = 0.0;
    for (std::size_t u = 0; u < d_u; ++u) v += pu[u] * f_mid(a, z, u);
    return v;
}

double FirstStagePopulation::oracle_effect(const ContrastSpec& c) const {
    std::vector<double> pu = marginal_u();
    std::vector<double> mu = c.measure();
    double j_val = 0.0;
    for (std::size_t j = 0; j < c.support.size(); ++j) {
        if (c.weights[j] == 0.0) continue;
        std::size_t ai = a_level_index(c.support[j]);
        for (std::size_t u = 0; u < d_u; ++u)
            for (std::size_t g = 0; g < n_grid; ++g)
                j_val += pu[u] * eta_weights(u, g) * c.weights[j] * mu[j] * k0v_at(ai, g, u);
    }
    return j_val;
}

std::vector<double> FirstStagePopulation::fully_supported_values(std::size_t n_blocks) const {
    if (n_blocks == 0 || n_grid % n_blocks != 0)
        throw schema_error("n_blocks must divide the eta grid size");
    std::size_t block = n_grid / n_blocks;
    std::vector<double> out;
    for (double a : a_levels) {
        bool ok = true;
        for (std::size_t u = 0; u < d_u && ok; ++u) {
            for (std::size_t b = 0; b < n_blocks && ok; ++b) {
                bool hit = false;
                for (std::size_t z = 0; z < d_z && !hit; ++z)
                    for (std::size_t g = b * block; g < (b + 1) * block && !hit; ++g)
                        if (a_code(u, z, g) == a) hit = true;
                ok = hit;
            }
        }
        if (ok) out.push_back(a);
    }
    return out;
}

FirstStageTables first_stage_tables(const FirstStagePopulation& fs) {
    FirstStageTables t;
    const std::size_t cells = fs.d_u * fs.d_z * fs.n_grid;
    t.a_idx.resize(cells);
    t.v_oracle.resize(cells);
    for (std::size_t u = 0; u < fs.d_u; ++u)
        for (std::size_t z = 0; z < fs.d_z; ++z) {
            // Codes are strictly increasing in g, so the per-(u,z) midpoint
            // CDF is a running sum over the eta weights.
            double below = 0.0;
            for (std::size_t g = 0; g < fs.n_grid; ++g) {
                std::size_t idx = (u * fs.d_z + z) * fs.n_grid + g;
                t.a_idx[idx] = fs.a_level_index(fs.a_code(u, z, g));
                double wgt = fs.eta_weights(u, g);
                t.v_oracle[idx] = below + 0.5 * wgt;
                below += wgt;
            }
        }
    std::vector<double> pu = fs.marginal_u();
    t.v43 = linalg::Matrix(fs.a_levels.size(), fs.d_z);
    for (std::size_t z = 0; z < fs.d_z; ++z) {
        for (std::size_t u = 0; u < fs.d_u; ++u) {
            // Sweep treatment levels in order, accumulating the conditional
            // CDF given (z, u) at each level.
            double below = 0.0;
            std::size_t g = 0;
            for (std::size_t ai = 0; ai < fs.a_levels.size(); ++ai) {
                double at = 0.0;
                while (g < fs.n_grid && fs.a_code(u, z, g) == fs.a_levels[ai]) {
                    at += fs.eta_weights(u, g);
                    ++g;
                }
                t.v43(ai, z) += pu[u] * (below + 0.5 * at);
                below += at;
            }
        }
    }
    return t;
}

FirstStagePopulation monotone_population(const MonotoneFixtureSpec& spec) {
    if (spec.n_blocks == 0 || spec.n_grid % spec.n_blocks != 0)
        throw config_error("monotone fixture: n_blocks must divide n_grid");
    if (spec.d_u == 0 || spec.d_u > spec.n_grid / spec.n_blocks)
        throw config_error("monotone fixture: d_u must be between 1 and the block width");
    if (spec.t_levels <= spec.n_blocks)
        throw config_error("monotone fixture: t_levels must exceed n_blocks");

    const std::size_t G = spec.n_grid;
    const std::size_t block = G / spec.n_blocks;
    const std::size_t group = spec.d_u;  // z values per h-shift level
    const std::size_t d_z = spec.t_levels * group;

    FirstStagePopulation fs;
    fs.d_u = spec.d_u;
    fs.d_z = d_z;
    fs.d_w0 = spec.d_w0;
    fs.d_w1 = spec.d_w1;
    fs.n_grid = G;
    fs.y_noise_sd = spec.y_noise_sd;

    rng::Rng r(spec.seed);
    std::vector<double> pu = floored_dirichlet(r, fs.d_u, 1.0 / (4.0 * fs.d_u));
    std::vector<std::vector<double>> pz_u(fs.d_u), pw0_u(fs.d_u), pw1_u(fs.d_u);
    for (std::size_t u = 0; u < fs.d_u; ++u) {
        pz_u[u] = floored_dirichlet(r, d_z, spec.support_floor / static_cast<double>(d_z));
        pw0_u[u] = floored_dirichlet(r, fs.d_w0, spec.support_floor);
        pw1_u[u] = floored_dirichlet(r, fs.d_w1, spec.support_floor);
    }
    fs.p.assign(fs.d_u * d_z * fs.d_w0 * fs.d_w1, 0.0);
    for (std::size_t u = 0; u < fs.d_u; ++u)
        for (std::size_t z = 0; z < d_z; ++z)
            for (std::size_t w0 = 0; w0 < fs.d_w0; ++w0)
                for (std::size_t w1 = 0; w1 < fs.d_w1; ++w1)
                    fs.p[((u * d_z + z) * fs.d_w0 + w0) * fs.d_w1 + w1] =
                        pu[u] * pz_u[u][z] * pw0_u[u][w0] * pw1_u[u][w1];
    double total = std::accumulate(fs.p.begin(), fs.p.end(), 0.0);
    for (auto& v : fs.p) v /= total;
    pu = fs.marginal_u();

    fs.eta_grid.resize(G);
    for (std::size_t g = 0; g < G; ++g)
        fs.eta_grid[g] = (static_cast<double>(g) + 0.5) / static_cast<double>(G);

    // Confounder-specific eta weights whose p(u)-mixture is exactly uniform
    // and whose per-block sums are exactly 1/n_blocks, so equal-mass bins of
    // both the oracle control and the control quantity land on eta blocks.
    std::vector<double> c_u(fs.d_u, 0.0);
    if (fs.d_u > 1) {
        double mean = 0.0;
        for (std::size_t u = 0; u < fs.d_u; ++u) {
            c_u[u] = 2.0 * (static_cast<double>(u) + 0.5) / static_cast<double>(fs.d_u) - 1.0;
            mean += pu[u] * c_u[u];
        }
        double max_abs = 0.0;
        for (auto& v : c_u) {
            v -= mean;
            max_abs = std::max(max_abs, std::abs(v));
        }
        for (auto& v : c_u) v *= spec.weight_amplitude / max_abs;
    }
    fs.eta_weights = linalg::Matrix(fs.d_u, G);
    const double two_pi = 2.0 * std::acos(-1.0);
    for (std::size_t u = 0; u < fs.d_u; ++u) {
        double row_sum = 0.0;
        for (std::size_t g = 0; g < G; ++g) {
            double phase = (static_cast<double>(g) + 0.5) / static_cast<double>(block);
            double w = (1.0 + c_u[u] * std::sin(two_pi * phase)) / static_cast<double>(G);
            fs.eta_weights(u, g) = w;
            row_sum += w;
        }
        for (std::size_t g = 0; g < G; ++g) fs.eta_weights(u, g) /= row_sum;
    }

    // m is the identity reindexing of the eta grid; the confounder enters the
    // first stage through the eta distribution instead, which keeps every
    // treatment value attainable for every u.
    fs.m_form = linalg::Matrix(fs.d_u, G);
    for (std::size_t u = 0; u < fs.d_u; ++u)
        for (std::size_t g = 0; g < G; ++g) fs.m_form(u, g) = fs.eta_grid[g];
    fs.m_levels = fs.eta_grid;

    fs.h_form = linalg::Matrix(d_z, G);
    for (std::size_t z = 0; z < d_z; ++z) {
        std::size_t shift = (z / group) * block;
        for (std::size_t g = 0; g < G; ++g)
            fs.h_form(z, g) = static_cast<double>(g + shift);
    }
    std::vector<double> levels(fs.h_form.data.begin(), fs.h_form.data.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    fs.a_levels = std::move(levels);

    // Outcome means constant on eta blocks.
    fs.k0v.assign(fs.a_levels.size() * G * fs.d_u, 0.0);
    for (std::size_t ai = 0; ai < fs.a_levels.size(); ++ai)
        for (std::size_t b = 0; b < spec.n_blocks; ++b)
            for (std::size_t u = 0; u < fs.d_u; ++u) {
                double value = r.uniform(-1.0, 1.0);
                for (std::size_t g = b * block; g < (b + 1) * block; ++g)
                    fs.k0v[(ai * G + g) * fs.d_u + u] = value;
            }

    fs.validate();
    return fs;
}

Dataset sample_monotone(const FirstStagePopulation& fs, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw schema_error("sample_monotone: n must be >= 1");
    fs.validate();
    rng::Rng r(seed);

    Dataset ds;
    ds.simulated = true;
    auto add = [&](const std::string& name, VariableRole role, ColumnKind kind) {
        Column c;
        c.name = name;
        c.role = role;
        c.kind = kind;
        c.values.reserve(n);
        ds.columns.push_back(std::move(c));
        return ds.columns.size() - 1;
    };
    std::size_t iy = add("y", VariableRole::outcome, ColumnKind::continuous);
    std::size_t ia = add("a", VariableRole::treatment, ColumnKind::continuous);
    std::size_t iz = add("z", VariableRole::instrument, ColumnKind::categorical);
    std::size_t iw0 = add("w0", VariableRole::proxy_w0, ColumnKind::categorical);
    std::size_t iw1 = add("w1", VariableRole::proxy_w1, ColumnKind::categorical);
    std::size_t iu = add("u", VariableRole::latent_confounder, ColumnKind::categorical);
    std::size_t ieta = add("eta", VariableRole::latent_disturbance, ColumnKind::continuous);
    std::size_t iv = add("v_oracle", VariableRole::latent_disturbance, ColumnKind::continuous);
    std::size_t iv43 =
        add("v43_oracle", VariableRole::latent_disturbance, ColumnKind::continuous);

    FirstStageTables tab = first_stage_tables(fs);
    std::vector<double> eta_w(fs.n_grid);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t cell = r.categorical(fs.p);
        std::size_t w1 = cell % fs.d_w1;
        cell /= fs.d_w1;
        std::size_t w0 = cell % fs.d_w0;
        cell /= fs.d_w0;
        std::size_t z = cell % fs.d_z;
        std::size_t u = cell / fs.d_z;
        for (std::size_t g = 0; g < fs.n_grid; ++g) eta_w[g] = fs.eta_weights(u, g);
        std::size_t g = r.categorical(eta_w);

        std::size_t idx = (u * fs.d_z + z) * fs.n_grid + g;
        std::size_t ai = tab.a_idx[idx];
        double y = fs.k0v_at(ai, g, u);
        if (fs.y_noise_sd > 0.0) y += fs.y_noise_sd * r.normal();

        ds.columns[iy].values.push_back(y);
        ds.columns[ia].values.push_back(fs.a_levels[ai]);
        ds.columns[iz].values.push_back(static_cast<double>(z));
        ds.columns[iw0].values.push_back(static_cast<double>(w0));
        ds.columns[iw1].values.push_back(static_cast<double>(w1));
        ds.columns[iu].values.push_back(static_cast<double>(u));
        ds.columns[ieta].values.push_back(fs.eta_grid[g]);
        ds.columns[iv].values.push_back(tab.v_oracle[idx]);
        ds.columns[iv43].values.push_back(tab.v43(ai, z));
    }
    return ds;
}

}  // namespace icc::synth
