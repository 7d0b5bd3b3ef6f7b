#ifndef ICC_LINALG_HPP
#define ICC_LINALG_HPP

#include <cstddef>
#include <vector>

namespace icc::linalg {

// Dense row-major matrix. Sized for the small systems this library solves
// (bridge systems, sieve cross-moments, regression Grams); no BLAS needed.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static Matrix identity(std::size_t n);
    bool empty() const { return rows == 0 || cols == 0; }
};

using Vector = std::vector<double>;

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, const Vector& x);
// y^T A for a row vector y (length a.rows).
Vector vecmat(const Vector& y, const Matrix& a);

double dot(const Vector& a, const Vector& b);
double norm2(const Vector& a);

// Thin-plus-null SVD, A = U diag(sigma) V^T with sigma descending.
// U is rows x cols (columns past the rank are zero), V is cols x cols and
// always complete, so right null vectors are available for any shape.
struct Svd {
    Matrix u;
    Vector sigma;
    Matrix v;
};

// One-sided Jacobi orthogonalization of the columns of a. Accurate to
// ~eps * sigma_max, which the bridge validity tolerances rely on.
Svd svd(const Matrix& a);

std::size_t svd_rank(const Svd& s, double rel_tol);

struct LstsqResult {
    Vector x;
    double residual_norm = 0.0;
    std::size_t rank = 0;
    Matrix nullspace;  // columns form an orthonormal basis of ker(A)
};

// Minimum-norm least-squares solution of A x = b with relative singular
// value cutoff rel_tol * sigma_max.
LstsqResult lstsq_min_norm(const Matrix& a, const Vector& b, double rel_tol = 1e-10);

Matrix pinv(const Matrix& a, double rel_tol = 1e-10);

// Lower Cholesky factor of a symmetric PSD matrix; throws icc::schema_error
// if a diagonal pivot is negative beyond tolerance.
Matrix cholesky_lower(const Matrix& a);

}  // namespace icc::linalg

#endif
