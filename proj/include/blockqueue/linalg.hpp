#pragma once

#include <vector>

#include "blockqueue/errors.hpp"

namespace blockqueue {

using Vec = std::vector<double>;

// Dense real matrix, row-major.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    bool square() const { return rows == cols; }

    static Matrix identity(int n);
    static Matrix zeros(int r, int c) { return Matrix(r, c); }
};

Matrix operator+(const Matrix& x, const Matrix& y);
Matrix operator-(const Matrix& x, const Matrix& y);
Matrix operator*(const Matrix& x, const Matrix& y);
Matrix scale(const Matrix& x, double s);
Matrix transpose(const Matrix& x);

// x^p by binary exponentiation; p >= 0.
Matrix mat_pow(const Matrix& x, unsigned p);

double inf_norm(const Matrix& x);
double inf_norm(const Vec& v);
Vec row_sums(const Matrix& x);

Vec mat_vec(const Matrix& x, const Vec& v);
Vec vec_mat(const Vec& v, const Matrix& x); // row vector times matrix
double dot(const Vec& x, const Vec& y);
double vec_sum(const Vec& x);
Vec ones(int n);

// Kronecker product: entry block (i,j) of the result is A(i,j)*B.
Matrix kron_product(const Matrix& a, const Matrix& b);

// Kronecker sum A (+) B = A x I + I x B; both operands must be square.
Matrix kron_sum(const Matrix& a, const Matrix& b);

// Dense LU with partial pivoting. factor() throws NumericalError on a
// singular matrix, with a pivot-based condition estimate in the message.
class LuSolver {
public:
    explicit LuSolver(Matrix a);

    Vec solve(Vec b) const;
    Matrix solve(const Matrix& b) const;

    double min_pivot() const { return min_pivot_; }

private:
    Matrix lu_;
    std::vector<int> piv_;
    double min_pivot_ = 0.0;
};

Vec solve_linear(const Matrix& a, const Vec& b);
Matrix solve_linear(const Matrix& a, const Matrix& b);
Matrix inverse(const Matrix& a);

// Largest-modulus eigenvalue estimate by power iteration (diagnostic use).
double spectral_radius(const Matrix& x, double rel_tol = 1e-10, int max_iter = 20000);

// Strong connectivity of the directed graph induced by nonzero off-diagonal
// entries of a square matrix.
bool is_irreducible(const Matrix& q);

// Stationary distribution of an irreducible conservative generator: solves
// x Q = 0, x e = 1 by replacing the last balance equation with the
// normalization. Throws on reducible/singular input or a bad residual.
Vec ctmc_stationary(const Matrix& q, double tol = 1e-10);

// General banded matrix in LAPACK-style band storage (kl sub-, ku
// super-diagonals), with an LU factorization using partial pivoting.
class BandedMatrix {
public:
    BandedMatrix(int n, int kl, int ku);

    int size() const { return n_; }
    void add(int i, int j, double v);
    double get(int i, int j) const;

    // Factors in place; throws NumericalError if singular.
    void factor();
    Vec solve(Vec b) const;

private:
    int n_, kl_, ku_;
    int ldab_;
    std::vector<double> ab_; // column-major bands, row kl_+ku_+i-j, extra kl_ rows for fill
    std::vector<int> piv_;
    bool factored_ = false;

    double& at(int i, int j) { return ab_[static_cast<size_t>(j) * ldab_ + (kl_ + ku_ + i - j)]; }
    double at(int i, int j) const { return ab_[static_cast<size_t>(j) * ldab_ + (kl_ + ku_ + i - j)]; }
};

} // namespace blockqueue
