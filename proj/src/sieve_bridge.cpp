#include "icc/sieve_bridge.hpp"

#include <algorithm>
#include <cmath>

#include "icc/errors.hpp"

namespace icc::sieve {

namespace {

using linalg::Matrix;
using linalg::Vector;

Matrix hstack(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw schema_error("hstack: row mismatch");
    Matrix out(a.rows, a.cols + b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) out(i, j) = a(i, j);
        for (std::size_t j = 0; j < b.cols; ++j) out(i, a.cols + j) = b(i, j);
    }
    return out;
}

}  // namespace

BasisSpec BasisSpec::poly(std::vector<int> degree, bool interactions, double ridge) {
    BasisSpec s;
    s.family = Family::polynomial;
    s.degree = std::move(degree);
    s.interactions = interactions;
    s.ridge = ridge;
    return s;
}

FeatureResult build_features(const Matrix& values, const BasisSpec& spec) {
    const std::size_t n = values.rows;
    const std::size_t d = values.cols;
    if (n == 0 || d == 0) throw schema_error("build_features: empty value matrix");

    FeatureResult out;
    std::vector<Vector> cols;
    cols.emplace_back(n, 1.0);
    out.names.push_back("1");

    if (spec.family == BasisSpec::Family::polynomial) {
        if (spec.degree.size() != d)
            throw schema_error("build_features: degree list must match variable count");
        for (std::size_t v = 0; v < d; ++v) {
            if (spec.degree[v] < 0) throw schema_error("build_features: negative degree");
            for (int p = 1; p <= spec.degree[v]; ++p) {
                Vector col(n);
                for (std::size_t i = 0; i < n; ++i) col[i] = std::pow(values(i, v), p);
                cols.push_back(std::move(col));
                out.names.push_back("x" + std::to_string(v) +
                                    (p == 1 ? "" : "^" + std::to_string(p)));
            }
        }
    } else {
        if (spec.knots.size() != d)
            throw schema_error("build_features: knot list must match variable count");
        for (std::size_t v = 0; v < d; ++v) {
            Vector col(n);
            for (std::size_t i = 0; i < n; ++i) col[i] = values(i, v);
            double lo = *std::min_element(col.begin(), col.end());
            double hi = *std::max_element(col.begin(), col.end());
            cols.push_back(col);
            out.names.push_back("x" + std::to_string(v));
            for (double knot : spec.knots[v]) {
                if (knot <= lo || knot >= hi) {
                    out.warnings.push_back("knot " + std::to_string(knot) + " for variable " +
                                           std::to_string(v) +
                                           " outside the data range; segment dropped");
                    continue;
                }
                Vector hinge(n);
                for (std::size_t i = 0; i < n; ++i)
                    hinge[i] = std::max(0.0, values(i, v) - knot);
                cols.push_back(std::move(hinge));
                out.names.push_back("hinge(x" + std::to_string(v) + "," +
                                    std::to_string(knot) + ")");
            }
        }
    }

    if (spec.interactions) {
        for (std::size_t v = 0; v < d; ++v)
            for (std::size_t v2 = v + 1; v2 < d; ++v2) {
                Vector col(n);
                for (std::size_t i = 0; i < n; ++i) col[i] = values(i, v) * values(i, v2);
                cols.push_back(std::move(col));
                out.names.push_back("x" + std::to_string(v) + "*x" + std::to_string(v2));
            }
    }

    out.x = Matrix(n, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j)
        for (std::size_t i = 0; i < n; ++i) out.x(i, j) = cols[j][i];
    return out;
}

SieveFit fit_sieve_from_moments(const Matrix& m_cb, const std::vector<double>& c_y,
                                double ridge) {
    if (m_cb.rows != c_y.size())
        throw schema_error("fit_sieve: moment vector length mismatch");
    if (ridge < 0.0) throw schema_error("fit_sieve: ridge must be nonnegative");

    SieveFit fit;
    fit.n_bridge_features = m_cb.cols;
    fit.n_instrument_features = m_cb.rows;
    if (ridge == 0.0) {
        linalg::LstsqResult ls = linalg::lstsq_min_norm(m_cb, c_y, 1e-10);
        fit.theta = std::move(ls.x);
        fit.rank = ls.rank;
        fit.moment_residual = ls.residual_norm;
    } else {
        linalg::Svd s = linalg::svd(m_cb);
        fit.rank = linalg::svd_rank(s, 1e-10);
        fit.theta.assign(m_cb.cols, 0.0);
        for (std::size_t k = 0; k < s.sigma.size(); ++k) {
            if (s.sigma[k] == 0.0) continue;
            double u_b = 0.0;
            for (std::size_t i = 0; i < m_cb.rows; ++i) u_b += s.u(i, k) * c_y[i];
            double w = s.sigma[k] * u_b / (s.sigma[k] * s.sigma[k] + ridge);
            for (std::size_t j = 0; j < m_cb.cols; ++j) fit.theta[j] += w * s.v(j, k);
        }
        Vector fitted = linalg::matvec(m_cb, fit.theta);
        double res = 0.0;
        for (std::size_t i = 0; i < c_y.size(); ++i) {
            double dd = fitted[i] - c_y[i];
            res += dd * dd;
        }
        fit.moment_residual = std::sqrt(res);
    }
    if (fit.n_instrument_features < fit.n_bridge_features && ridge == 0.0)
        fit.warnings.push_back(
            "fewer instrument features than bridge features: system underdetermined, "
            "minimum-norm solution returned");
    return fit;
}

SieveFit fit_sieve_bridge(const std::vector<double>& y, const Matrix& a, const Matrix& w,
                          const Matrix& z, const BasisSpec& basis_h, const BasisSpec& basis_z) {
    const std::size_t n = y.size();
    if (a.rows != n || w.rows != n || z.rows != n)
        throw schema_error("fit_sieve: row count mismatch");

    FeatureResult b = build_features(hstack(a, w), basis_h);
    FeatureResult c = build_features(z, basis_z);
    if (b.x.cols > n && basis_h.ridge == 0.0)
        throw schema_error("fit_sieve: more bridge features than observations (set ridge > 0)");
    if (c.x.cols > n && basis_h.ridge == 0.0)
        throw schema_error("fit_sieve: more instrument features than observations");

    Matrix m_cb = linalg::matmul(linalg::transpose(c.x), b.x);
    Vector c_y = linalg::vecmat(y, c.x);
    double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : m_cb.data) v *= inv_n;
    for (auto& v : c_y) v *= inv_n;

    SieveFit fit = fit_sieve_from_moments(m_cb, c_y, basis_h.ridge);
    fit.basis_h = basis_h;
    for (const auto& msg : b.warnings) fit.warnings.push_back(msg);
    for (const auto& msg : c.warnings) fit.warnings.push_back(msg);
    return fit;
}

estimators::EstimateReport effect_from_sieve(const SieveFit& fit, const Matrix& w_sample,
                                             const ContrastSpec& c,
                                             const std::vector<double>& a_data_range) {
    if (fit.theta.empty()) throw schema_error("effect_from_sieve: empty fit");
    const std::size_t n = w_sample.rows;
    if (n == 0) throw schema_error("effect_from_sieve: empty proxy sample");

    estimators::EstimateReport rep;
    rep.estimator = "sieve_bridge";
    rep.n_used = n;

    if (!a_data_range.empty()) {
        double lo = a_data_range[0], hi = a_data_range[1];
        for (std::size_t j = 0; j < c.support.size(); ++j)
            if (c.weights[j] != 0.0 && (c.support[j] < lo || c.support[j] > hi))
                rep.diagnostics.emplace_back("extrapolation_warning", c.support[j]);
    }

    std::vector<double> mu = c.measure();
    double total = 0.0;
    for (std::size_t j = 0; j < c.support.size(); ++j) {
        if (c.weights[j] == 0.0) continue;
        Matrix av(n, 1, c.support[j]);
        FeatureResult feats = build_features(hstack(av, w_sample), fit.basis_h);
        if (feats.x.cols != fit.theta.size())
            throw schema_error("effect_from_sieve: basis does not match the fit");
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double f = 0.0;
            for (std::size_t k = 0; k < feats.x.cols; ++k)
                f += feats.x(i, k) * fit.theta[k];
            mean += f;
        }
        mean /= static_cast<double>(n);
        total += c.weights[j] * mu[j] * mean;
    }
    rep.j_hat = total;
    rep.diagnostics.emplace_back("moment_residual", fit.moment_residual);
    rep.diagnostics.emplace_back("rank", static_cast<double>(fit.rank));
    return rep;
}

}  // namespace icc::sieve
