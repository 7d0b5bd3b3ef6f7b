#include "icc/linear_icc.hpp"

#include <algorithm>
#include <cmath>

#include "icc/errors.hpp"

namespace icc::linear {

namespace {

using linalg::Matrix;
using linalg::Vector;

Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw schema_error("hcat: row mismatch");
    Matrix out(a.rows, a.cols + b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) out(i, j) = a(i, j);
        for (std::size_t j = 0; j < b.cols; ++j) out(i, a.cols + j) = b(i, j);
    }
    return out;
}

// Solves (x'x) coef = x'y per column of targets; returns fitted projections.
Matrix project_onto(const Matrix& basis, const Matrix& targets) {
    Matrix g = linalg::matmul(linalg::transpose(basis), basis);
    Matrix gi = linalg::pinv(g, 1e-12);
    Matrix coef = linalg::matmul(gi, linalg::matmul(linalg::transpose(basis), targets));
    return linalg::matmul(basis, coef);
}

// Solves g x = b, declaring failure when g is singular at tolerance
// 1e-10 relative to max(its own largest singular value, scale_ref).
Vector solve_sym(const Matrix& g, const Vector& b, const char* context,
                 double scale_ref = 0.0) {
    linalg::Svd s = linalg::svd(g);
    double scale = std::max(s.sigma.empty() ? 0.0 : s.sigma[0], scale_ref);
    for (std::size_t k = 0; k < g.cols; ++k)
        if (!(s.sigma[k] > 1e-10 * scale)) throw identification_error(context);
    Matrix gi = linalg::pinv(g, 1e-12);
    return linalg::matvec(gi, b);
}

struct IccWork {
    Matrix a_hat;    // P_Z A
    Matrix w_r;      // rank-reduced projected proxies, n x r
    Vector sigma;    // singular values of P_Z W
    std::size_t rank = 0;
};

IccWork icc_work(const std::vector<double>& y, const Matrix& a, const Matrix& z,
                 const Matrix& w, std::optional<std::size_t> rank) {
    std::size_t n = y.size();
    if (a.rows != n || z.rows != n || w.rows != n)
        throw schema_error("fit_icc: row count mismatch");
    IccWork work;
    work.a_hat = project_onto(z, a);
    Matrix w_hat = project_onto(z, w);
    linalg::Svd s = linalg::svd(w_hat);
    work.sigma = s.sigma;
    work.rank = select_rank(s.sigma, rank, std::min(w.cols, z.cols));
    if (n <= z.cols || z.cols < a.cols + work.rank)
        throw schema_error("fit_icc: need n > d_Z >= d_A + rank");
    // Basis W V_r: spans the top-r singular subspace of P_Z W.
    work.w_r = Matrix(n, work.rank);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < work.rank; ++k)
            work.w_r(i, k) = s.u(i, k) * s.sigma[k];
    return work;
}

const char* kRelevanceError =
    "instruments not relevant conditional on projected proxies";

// Influence-function covariance: the fit is a smooth function of the sample
// second moments of (y, A, Z, W), so its sampling variance is
// grad f' * Cov(moments) * grad f. This accounts for every estimated stage
// (both projections and the rank-r proxy basis); a row-wise plug-in of the
// second-stage residuals does not, and overstates the variance.
Matrix moment_delta_cov(const std::vector<double>& y, const Matrix& a, const Matrix& z,
                        const Matrix& w, std::size_t rank) {
    const std::size_t n = y.size();
    const std::size_t p = 1 + a.cols + z.cols + w.cols;
    const std::size_t q = p * (p + 1) / 2;

    auto row_value = [&](std::size_t i, std::size_t k) {
        if (k == 0) return y[i];
        if (k < 1 + a.cols) return a(i, k - 1);
        if (k < 1 + a.cols + z.cols) return z(i, k - 1 - a.cols);
        return w(i, k - 1 - a.cols - z.cols);
    };

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    coords.reserve(q);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i; j < p; ++j) coords.emplace_back(i, j);

    // Mean moment vector and its empirical covariance.
    Vector mbar(q, 0.0);
    Vector m(q);
    Matrix omega(q, q);
    std::vector<Vector> rows_m(n, Vector(q));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < q; ++k) {
            m[k] = row_value(i, coords[k].first) * row_value(i, coords[k].second);
            mbar[k] += m[k];
        }
        rows_m[i] = m;
    }
    for (auto& v : mbar) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < q; ++k) m[k] = rows_m[i][k] - mbar[k];
        for (std::size_t k = 0; k < q; ++k) {
            if (m[k] == 0.0) continue;
            for (std::size_t l = k; l < q; ++l) omega(k, l) += m[k] * m[l];
        }
    }
    for (std::size_t k = 0; k < q; ++k)
        for (std::size_t l = k; l < q; ++l) {
            omega(k, l) /= static_cast<double>(n);
            omega(l, k) = omega(k, l);
        }

    PopulationMoments pm;
    pm.d_a = a.cols;
    pm.d_z = z.cols;
    pm.d_w = w.cols;
    pm.m = Matrix(p, p);
    for (std::size_t k = 0; k < q; ++k) {
        pm.m(coords[k].first, coords[k].second) = mbar[k];
        pm.m(coords[k].second, coords[k].first) = mbar[k];
    }

    double scale = 0.0;
    for (std::size_t i = 0; i < p; ++i) scale += pm.m(i, i);
    scale /= static_cast<double>(p);

    // Central-difference gradient of (beta, delta) in each moment coordinate.
    const std::size_t out_dim = a.cols + rank;
    Matrix grad(q, out_dim);
    for (std::size_t k = 0; k < q; ++k) {
        double h = 1e-5 * std::max(std::abs(mbar[k]), 1e-3 * scale);
        PopulationMoments up = pm, dn = pm;
        up.m(coords[k].first, coords[k].second) += h;
        up.m(coords[k].second, coords[k].first) = up.m(coords[k].first, coords[k].second);
        dn.m(coords[k].first, coords[k].second) -= h;
        dn.m(coords[k].second, coords[k].first) = dn.m(coords[k].first, coords[k].second);
        PopulationFit fu = population_fit_icc(up, rank);
        PopulationFit fd = population_fit_icc(dn, rank);
        for (std::size_t c = 0; c < a.cols; ++c)
            grad(k, c) = (fu.beta[c] - fd.beta[c]) / (2.0 * h);
        for (std::size_t c = 0; c < rank; ++c)
            grad(k, a.cols + c) = (fu.delta[c] - fd.delta[c]) / (2.0 * h);
    }

    Matrix cov = linalg::matmul(linalg::transpose(grad), linalg::matmul(omega, grad));
    for (auto& v : cov.data) v /= static_cast<double>(n);
    return cov;
}

LinearICCFit finish_fit(const std::vector<double>& y, const Matrix& a, const Matrix& z,
                        const Matrix& w, const IccWork& work, const Vector& beta) {
    std::size_t n = y.size();
    LinearICCFit fit;
    fit.beta_hat = beta;
    fit.rank_used = work.rank;
    fit.singular_values = work.sigma;

    // delta from the second-stage normal equations given beta.
    Vector y_less_ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        double ab = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) ab += a(i, j) * beta[j];
        y_less_ab[i] = y[i] - ab;
    }
    if (work.rank > 0) {
        Matrix g_rr = linalg::matmul(linalg::transpose(work.w_r), work.w_r);
        Vector rhs = linalg::vecmat(y_less_ab, work.w_r);
        fit.delta_hat = solve_sym(g_rr, rhs, "projected proxy basis is degenerate");
    }

    fit.residuals.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double wd = 0.0;
        for (std::size_t k = 0; k < work.rank; ++k) wd += work.w_r(i, k) * fit.delta_hat[k];
        fit.residuals[i] = y_less_ab[i] - wd;
    }

    fit.cov = moment_delta_cov(y, a, z, w, work.rank);
    return fit;
}

}  // namespace

std::size_t select_rank(const std::vector<double>& singular_values,
                        std::optional<std::size_t> declared, std::size_t max_rank,
                        double rel_gap) {
    for (std::size_t i = 0; i + 1 < singular_values.size(); ++i)
        if (singular_values[i] < singular_values[i + 1])
            throw schema_error("select_rank: singular values must be sorted descending");
    if (declared) {
        if (*declared > max_rank)
            throw schema_error("select_rank: declared confounder dimension exceeds "
                               "min(d_W, d_Z)");
        return *declared;
    }
    if (singular_values.empty()) return 0;
    double cutoff = singular_values.front() * rel_gap;
    std::size_t r = 0;
    for (double s : singular_values)
        if (s > cutoff) ++r;
    return std::min(r, max_rank);
}

LinearICCFit fit_icc(const std::vector<double>& y, const Matrix& a, const Matrix& z,
                     const Matrix& w, std::optional<std::size_t> rank) {
    IccWork work = icc_work(y, a, z, w, rank);

    // A' M_What P_Z A = A_hat' A_hat - (U_r' A)'(U_r' A) evaluated through
    // the scaled basis W_r.
    Matrix g_aa = linalg::matmul(linalg::transpose(work.a_hat), work.a_hat);
    double unprojected_scale = linalg::svd(g_aa).sigma[0];
    Vector b_ay = linalg::vecmat(y, work.a_hat);
    if (work.rank > 0) {
        Matrix g_rr = linalg::matmul(linalg::transpose(work.w_r), work.w_r);
        Matrix g_ra = linalg::matmul(linalg::transpose(work.w_r), work.a_hat);
        Matrix g_rr_inv = linalg::pinv(g_rr, 1e-12);
        Matrix proj = linalg::matmul(linalg::transpose(g_ra),
                                     linalg::matmul(g_rr_inv, g_ra));
        for (std::size_t i = 0; i < g_aa.rows; ++i)
            for (std::size_t j = 0; j < g_aa.cols; ++j) g_aa(i, j) -= proj(i, j);
        Vector r_y = linalg::vecmat(y, work.w_r);
        Vector tmp = linalg::matvec(g_rr_inv, r_y);
        Vector corr = linalg::matvec(linalg::transpose(g_ra), tmp);
        for (std::size_t j = 0; j < b_ay.size(); ++j) b_ay[j] -= corr[j];
    }
    Vector beta = solve_sym(g_aa, b_ay, kRelevanceError, unprojected_scale);
    return finish_fit(y, a, z, w, work, beta);
}

LinearICCFit fit_icc_two_stage(const std::vector<double>& y, const Matrix& a, const Matrix& z,
                               const Matrix& w, std::optional<std::size_t> rank) {
    IccWork work = icc_work(y, a, z, w, rank);
    Matrix x2 = hcat(work.a_hat, work.w_r);
    Matrix gram = linalg::matmul(linalg::transpose(x2), x2);
    Vector rhs = linalg::vecmat(y, x2);
    Vector theta = solve_sym(gram, rhs, kRelevanceError);
    Vector beta(theta.begin(), theta.begin() + static_cast<long>(a.cols));
    return finish_fit(y, a, z, w, work, beta);
}

LinearICCFit fit_icc_control_form(const std::vector<double>& y, const Matrix& a,
                                  const Matrix& z, const Matrix& w,
                                  std::optional<std::size_t> rank) {
    IccWork work = icc_work(y, a, z, w, rank);
    std::size_t n = y.size();
    // First-stage residuals A - Z pihat.
    Matrix nu = a;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) nu(i, j) -= work.a_hat(i, j);
    Matrix x3 = hcat(hcat(a, nu), work.w_r);
    Matrix gram = linalg::matmul(linalg::transpose(x3), x3);
    Vector rhs = linalg::vecmat(y, x3);
    Vector theta = solve_sym(gram, rhs, kRelevanceError);
    Vector beta(theta.begin(), theta.begin() + static_cast<long>(a.cols));
    return finish_fit(y, a, z, w, work, beta);
}

linalg::Matrix sandwich_cov(const LinearICCFit& fit, const std::vector<double>& y,
                            const Matrix& a, const Matrix& z, const Matrix& w) {
    LinearICCFit refit = fit_icc(y, a, z, w, fit.rank_used);
    return refit.cov;
}

OlsFit fit_ols(const std::vector<double>& y, const Matrix& x) {
    if (x.rows != y.size()) throw schema_error("fit_ols: row count mismatch");
    Matrix gram = linalg::matmul(linalg::transpose(x), x);
    Vector rhs = linalg::vecmat(y, x);
    OlsFit fit;
    fit.coef = solve_sym(gram, rhs, "collinear regressors");
    fit.residuals.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        double f = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) f += x(i, j) * fit.coef[j];
        fit.residuals[i] = y[i] - f;
    }
    Matrix bread = linalg::pinv(gram, 1e-12);
    Matrix meat(x.cols, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double e2 = fit.residuals[i] * fit.residuals[i];
        for (std::size_t j = 0; j < x.cols; ++j)
            for (std::size_t k = 0; k < x.cols; ++k) meat(j, k) += e2 * x(i, j) * x(i, k);
    }
    fit.cov = linalg::matmul(bread, linalg::matmul(meat, bread));
    return fit;
}

OlsFit fit_2sls(const std::vector<double>& y, const Matrix& a, const Matrix& z) {
    if (z.cols < a.cols) throw schema_error("fit_2sls: need d_Z >= d_A");
    if (a.rows != y.size() || z.rows != y.size())
        throw schema_error("fit_2sls: row count mismatch");
    Matrix a_hat = project_onto(z, a);
    Matrix gram = linalg::matmul(linalg::transpose(a_hat), a_hat);
    Vector rhs = linalg::vecmat(y, a_hat);
    OlsFit fit;
    fit.coef = solve_sym(gram, rhs, "instruments not relevant for the treatment");
    fit.residuals.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        double f = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) f += a(i, j) * fit.coef[j];
        fit.residuals[i] = y[i] - f;
    }
    Matrix bread = linalg::pinv(gram, 1e-12);
    Matrix meat(a_hat.cols, a_hat.cols);
    for (std::size_t i = 0; i < a_hat.rows; ++i) {
        double e2 = fit.residuals[i] * fit.residuals[i];
        for (std::size_t j = 0; j < a_hat.cols; ++j)
            for (std::size_t k = 0; k < a_hat.cols; ++k)
                meat(j, k) += e2 * a_hat(i, j) * a_hat(i, k);
    }
    fit.cov = linalg::matmul(bread, linalg::matmul(meat, bread));
    return fit;
}

namespace {

// Views into the (y, A, Z, W) moment matrix.
struct MomentBlocks {
    const PopulationMoments& pm;
    std::size_t oy() const { return 0; }
    std::size_t oa() const { return 1; }
    std::size_t oz() const { return 1 + pm.d_a; }
    std::size_t ow() const { return 1 + pm.d_a + pm.d_z; }

    Matrix block(std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) const {
        Matrix out(nr, nc);
        for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j) out(i, j) = pm.m(r0 + i, c0 + j);
        return out;
    }
};

}  // namespace

PopulationFit population_fit_icc(const PopulationMoments& pm,
                                 std::optional<std::size_t> rank) {
    std::size_t dim = 1 + pm.d_a + pm.d_z + pm.d_w;
    if (pm.m.rows != dim || pm.m.cols != dim)
        throw schema_error("population moments: size mismatch");
    MomentBlocks mb{pm};
    Matrix s_zz = mb.block(mb.oz(), pm.d_z, mb.oz(), pm.d_z);
    Matrix s_za = mb.block(mb.oz(), pm.d_z, mb.oa(), pm.d_a);
    Matrix s_zw = mb.block(mb.oz(), pm.d_z, mb.ow(), pm.d_w);
    Matrix s_zy = mb.block(mb.oz(), pm.d_z, mb.oy(), 1);

    Matrix s_zz_inv = linalg::pinv(s_zz, 1e-12);
    // Gram of the projected proxies and its cross-moments.
    Matrix g_ww = linalg::matmul(linalg::transpose(s_zw), linalg::matmul(s_zz_inv, s_zw));
    Matrix g_wa = linalg::matmul(linalg::transpose(s_zw), linalg::matmul(s_zz_inv, s_za));
    Matrix g_wy = linalg::matmul(linalg::transpose(s_zw), linalg::matmul(s_zz_inv, s_zy));
    Matrix g_aa = linalg::matmul(linalg::transpose(s_za), linalg::matmul(s_zz_inv, s_za));
    Matrix g_ay = linalg::matmul(linalg::transpose(s_za), linalg::matmul(s_zz_inv, s_zy));

    linalg::Svd s = linalg::svd(g_ww);
    std::vector<double> sig_sq = s.sigma;
    std::vector<double> sig(sig_sq.size());
    for (std::size_t i = 0; i < sig.size(); ++i) sig[i] = std::sqrt(std::max(0.0, sig_sq[i]));
    std::size_t r = select_rank(sig, rank, std::min(pm.d_w, pm.d_z));

    PopulationFit fit;
    fit.rank_used = r;
    fit.singular_values_sq = sig_sq;

    // Restrict the proxy block to the top-r eigenvector basis. Signs are
    // canonicalized (largest-magnitude coordinate positive) so the basis is
    // a continuous function of the moments.
    Matrix v_r(pm.d_w, r);
    for (std::size_t k = 0; k < r; ++k) {
        std::size_t lead = 0;
        for (std::size_t i = 1; i < pm.d_w; ++i)
            if (std::abs(s.v(i, k)) > std::abs(s.v(lead, k))) lead = i;
        double sign = s.v(lead, k) >= 0.0 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < pm.d_w; ++i) v_r(i, k) = sign * s.v(i, k);
    }
    Matrix g_rr = linalg::matmul(linalg::transpose(v_r), linalg::matmul(g_ww, v_r));
    Matrix g_ra = linalg::matmul(linalg::transpose(v_r), g_wa);
    Matrix g_ry = linalg::matmul(linalg::transpose(v_r), g_wy);

    Matrix b = g_aa;
    Vector rhs(pm.d_a);
    for (std::size_t j = 0; j < pm.d_a; ++j) rhs[j] = g_ay(j, 0);
    if (r > 0) {
        Matrix g_rr_inv = linalg::pinv(g_rr, 1e-12);
        Matrix proj = linalg::matmul(linalg::transpose(g_ra),
                                     linalg::matmul(g_rr_inv, g_ra));
        for (std::size_t i = 0; i < b.rows; ++i)
            for (std::size_t j = 0; j < b.cols; ++j) b(i, j) -= proj(i, j);
        Vector tmp(r);
        for (std::size_t k = 0; k < r; ++k) tmp[k] = g_ry(k, 0);
        Vector gi_tmp = linalg::matvec(g_rr_inv, tmp);
        Vector corr = linalg::matvec(linalg::transpose(g_ra), gi_tmp);
        for (std::size_t j = 0; j < pm.d_a; ++j) rhs[j] -= corr[j];
    }
    fit.beta = solve_sym(b, rhs, kRelevanceError);

    if (r > 0) {
        Vector ry_less(r);
        for (std::size_t k = 0; k < r; ++k) {
            double s_ab = 0.0;
            for (std::size_t j = 0; j < pm.d_a; ++j) s_ab += g_ra(k, j) * fit.beta[j];
            ry_less[k] = g_ry(k, 0) - s_ab;
        }
        Matrix g_rr_inv = linalg::pinv(g_rr, 1e-12);
        fit.delta = linalg::matvec(g_rr_inv, ry_less);
    }
    return fit;
}

std::vector<double> population_fit_2sls(const PopulationMoments& pm) {
    std::size_t dim = 1 + pm.d_a + pm.d_z + pm.d_w;
    if (pm.m.rows != dim || pm.m.cols != dim)
        throw schema_error("population moments: size mismatch");
    MomentBlocks mb{pm};
    Matrix s_zz = mb.block(mb.oz(), pm.d_z, mb.oz(), pm.d_z);
    Matrix s_za = mb.block(mb.oz(), pm.d_z, mb.oa(), pm.d_a);
    Matrix s_zy = mb.block(mb.oz(), pm.d_z, mb.oy(), 1);
    Matrix s_zz_inv = linalg::pinv(s_zz, 1e-12);
    Matrix g_aa = linalg::matmul(linalg::transpose(s_za), linalg::matmul(s_zz_inv, s_za));
    Matrix g_ay = linalg::matmul(linalg::transpose(s_za), linalg::matmul(s_zz_inv, s_zy));
    Vector rhs(pm.d_a);
    for (std::size_t j = 0; j < pm.d_a; ++j) rhs[j] = g_ay(j, 0);
    return solve_sym(g_aa, rhs, "instruments not relevant for the treatment");
}

}  // namespace icc::linear
