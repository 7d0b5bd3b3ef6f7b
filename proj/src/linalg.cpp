#include "icc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "icc/errors.hpp"

namespace icc::linalg {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw schema_error("matmul: dimension mismatch");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

Vector matvec(const Matrix& a, const Vector& x) {
    if (a.cols != x.size()) throw schema_error("matvec: dimension mismatch");
    Vector y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

Vector vecmat(const Vector& y, const Matrix& a) {
    if (a.rows != y.size()) throw schema_error("vecmat: dimension mismatch");
    Vector r(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double yi = y[i];
        if (yi == 0.0) continue;
        for (std::size_t j = 0; j < a.cols; ++j) r[j] += yi * a(i, j);
    }
    return r;
}

double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

Svd svd(const Matrix& a) {
    const std::size_t m = a.rows, n = a.cols;
    Matrix b = a;
    Matrix v = Matrix::identity(n);

    // One-sided Jacobi: rotate column pairs of b until mutually orthogonal.
    const double tol = 1e-15;
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    double bp = b(i, p), bq = b(i, q);
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                double zeta = (beta - alpha) / (2.0 * gamma);
                double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    double bp = b(i, p), bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    Vector sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += b(i, j) * b(i, j);
        sigma[j] = std::sqrt(s);
    }

    // Order singular values descending.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    Svd out;
    out.sigma.resize(n);
    out.u = Matrix(m, n);
    out.v = Matrix(n, n);
    for (std::size_t jj = 0; jj < n; ++jj) {
        std::size_t j = order[jj];
        out.sigma[jj] = sigma[j];
        if (sigma[j] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) out.u(i, jj) = b(i, j) / sigma[j];
        }
        for (std::size_t i = 0; i < n; ++i) out.v(i, jj) = v(i, j);
    }
    return out;
}

std::size_t svd_rank(const Svd& s, double rel_tol) {
    if (s.sigma.empty()) return 0;
    double cutoff = rel_tol * s.sigma[0];
    std::size_t r = 0;
    for (double sv : s.sigma)
        if (sv > cutoff && sv > 0.0) ++r;
    return r;
}

LstsqResult lstsq_min_norm(const Matrix& a, const Vector& b, double rel_tol) {
    if (a.empty()) throw schema_error("lstsq: empty matrix");
    if (a.rows != b.size()) throw schema_error("lstsq: rhs length mismatch");
    Svd s = svd(a);
    std::size_t r = svd_rank(s, rel_tol);

    LstsqResult out;
    out.rank = r;
    out.x.assign(a.cols, 0.0);
    for (std::size_t k = 0; k < r; ++k) {
        double uk_b = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) uk_b += s.u(i, k) * b[i];
        double w = uk_b / s.sigma[k];
        for (std::size_t j = 0; j < a.cols; ++j) out.x[j] += w * s.v(j, k);
    }

    Vector ax = matvec(a, out.x);
    double res = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        double d = ax[i] - b[i];
        res += d * d;
    }
    out.residual_norm = std::sqrt(res);

    std::size_t null_dim = a.cols - r;
    out.nullspace = Matrix(a.cols, null_dim);
    for (std::size_t k = 0; k < null_dim; ++k)
        for (std::size_t j = 0; j < a.cols; ++j) out.nullspace(j, k) = s.v(j, r + k);
    return out;
}

Matrix pinv(const Matrix& a, double rel_tol) {
    Svd s = svd(a);
    std::size_t r = svd_rank(s, rel_tol);
    Matrix out(a.cols, a.rows);
    for (std::size_t k = 0; k < r; ++k) {
        double inv_s = 1.0 / s.sigma[k];
        for (std::size_t j = 0; j < a.cols; ++j) {
            double vj = s.v(j, k) * inv_s;
            if (vj == 0.0) continue;
            for (std::size_t i = 0; i < a.rows; ++i) out(j, i) += vj * s.u(i, k);
        }
    }
    return out;
}

Matrix cholesky_lower(const Matrix& a) {
    if (a.rows != a.cols) throw schema_error("cholesky: matrix not square");
    const std::size_t n = a.rows;
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a(i, i)));
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < j; ++k) sum += l(i, k) * l(j, k);
            if (i == j) {
                double d = a(i, i) - sum;
                if (d < -1e-10 * std::max(scale, 1.0))
                    throw schema_error("cholesky: matrix not positive semidefinite");
                l(i, j) = d > 0.0 ? std::sqrt(d) : 0.0;
            } else {
                l(i, j) = l(j, j) > 0.0 ? (a(i, j) - sum) / l(j, j) : 0.0;
            }
        }
    }
    return l;
}

}  // namespace icc::linalg
