#include "blockqueue/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <vector>

namespace blockqueue {

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

static void check_same_shape(const Matrix& x, const Matrix& y, const char* op) {
    if (x.rows != y.rows || x.cols != y.cols)
        throw ValidationError(std::string(op) + ": shape mismatch");
}

Matrix operator+(const Matrix& x, const Matrix& y) {
    check_same_shape(x, y, "matrix add");
    Matrix r = x;
    for (size_t i = 0; i < r.a.size(); ++i) r.a[i] += y.a[i];
    return r;
}

Matrix operator-(const Matrix& x, const Matrix& y) {
    check_same_shape(x, y, "matrix sub");
    Matrix r = x;
    for (size_t i = 0; i < r.a.size(); ++i) r.a[i] -= y.a[i];
    return r;
}

Matrix operator*(const Matrix& x, const Matrix& y) {
    if (x.cols != y.rows) throw ValidationError("matrix multiply: inner dimension mismatch");
    Matrix r(x.rows, y.cols);
    const int n = x.rows, k = x.cols, m = y.cols;
    // i-k-j order keeps the inner loop streaming over rows of y.
    for (int i = 0; i < n; ++i) {
        double* __restrict ri = &r.a[static_cast<size_t>(i) * m];
        const double* __restrict xi = &x.a[static_cast<size_t>(i) * k];
        for (int p = 0; p < k; ++p) {
            const double xv = xi[p];
            if (xv == 0.0) continue;
            const double* __restrict yp = &y.a[static_cast<size_t>(p) * m];
            for (int j = 0; j < m; ++j) ri[j] += xv * yp[j];
        }
    }
    return r;
}

Matrix scale(const Matrix& x, double s) {
    Matrix r = x;
    for (double& v : r.a) v *= s;
    return r;
}

Matrix transpose(const Matrix& x) {
    Matrix r(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) r(j, i) = x(i, j);
    return r;
}

Matrix mat_pow(const Matrix& x, unsigned p) {
    if (!x.square()) throw ValidationError("mat_pow: matrix must be square");
    Matrix result = Matrix::identity(x.rows);
    Matrix base = x;
    while (p > 0) {
        if (p & 1u) result = result * base;
        p >>= 1u;
        if (p > 0) base = base * base;
    }
    return result;
}

double inf_norm(const Matrix& x) {
    double best = 0.0;
    for (int i = 0; i < x.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j) s += std::abs(x(i, j));
        best = std::max(best, s);
    }
    return best;
}

double inf_norm(const Vec& v) {
    double best = 0.0;
    for (double x : v) best = std::max(best, std::abs(x));
    return best;
}

Vec row_sums(const Matrix& x) {
    Vec s(x.rows, 0.0);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) s[i] += x(i, j);
    return s;
}

Vec mat_vec(const Matrix& x, const Vec& v) {
    if (static_cast<int>(v.size()) != x.cols) throw ValidationError("mat_vec: dimension mismatch");
    Vec r(x.rows, 0.0);
    for (int i = 0; i < x.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j) s += x(i, j) * v[j];
        r[i] = s;
    }
    return r;
}

Vec vec_mat(const Vec& v, const Matrix& x) {
    if (static_cast<int>(v.size()) != x.rows) throw ValidationError("vec_mat: dimension mismatch");
    Vec r(x.cols, 0.0);
    for (int i = 0; i < x.rows; ++i) {
        const double vi = v[i];
        if (vi == 0.0) continue;
        for (int j = 0; j < x.cols; ++j) r[j] += vi * x(i, j);
    }
    return r;
}

double dot(const Vec& x, const Vec& y) {
    if (x.size() != y.size()) throw ValidationError("dot: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double vec_sum(const Vec& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
}

Vec ones(int n) { return Vec(static_cast<size_t>(n), 1.0); }

Matrix kron_product(const Matrix& a, const Matrix& b) {
    Matrix r(a.rows * b.rows, a.cols * b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) {
            const double av = a(i, j);
            if (av == 0.0) continue;
            for (int k = 0; k < b.rows; ++k)
                for (int l = 0; l < b.cols; ++l)
                    r(i * b.rows + k, j * b.cols + l) = av * b(k, l);
        }
    return r;
}

Matrix kron_sum(const Matrix& a, const Matrix& b) {
    if (!a.square() || !b.square()) throw ValidationError("kron_sum: operands must be square");
    return kron_product(a, Matrix::identity(b.rows)) + kron_product(Matrix::identity(a.rows), b);
}

LuSolver::LuSolver(Matrix a) : lu_(std::move(a)) {
    if (!lu_.square()) throw ValidationError("LU: matrix must be square");
    const int n = lu_.rows;
    piv_.resize(n);
    double scale = inf_norm(lu_);
    min_pivot_ = scale;
    for (int k = 0; k < n; ++k) {
        int p = k;
        double best = std::abs(lu_(k, k));
        for (int i = k + 1; i < n; ++i) {
            const double v = std::abs(lu_(i, k));
            if (v > best) { best = v; p = i; }
        }
        piv_[k] = p;
        if (p != k)
            for (int j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(p, j));
        const double pivot = lu_(k, k);
        if (best <= 1e-300 || best <= 1e-14 * scale) {
            std::ostringstream msg;
            msg << "LU: matrix singular to working precision (|pivot| = " << best
                << ", scale = " << scale << ", estimated cond >= " << (scale / std::max(best, 1e-300)) << ")";
            throw NumericalError(msg.str());
        }
        min_pivot_ = std::min(min_pivot_, best);
        for (int i = k + 1; i < n; ++i) {
            const double m = lu_(i, k) / pivot;
            lu_(i, k) = m;
            if (m == 0.0) continue;
            for (int j = k + 1; j < n; ++j) lu_(i, j) -= m * lu_(k, j);
        }
    }
}

Vec LuSolver::solve(Vec b) const {
    const int n = lu_.rows;
    if (static_cast<int>(b.size()) != n) throw ValidationError("LU solve: rhs dimension mismatch");
    // Row interchanges were applied to whole rows during factorization, so
    // permute the full right-hand side before the triangular sweeps.
    for (int k = 0; k < n; ++k)
        if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
    for (int k = 0; k < n; ++k)
        for (int i = k + 1; i < n; ++i) b[i] -= lu_(i, k) * b[k];
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int j = i + 1; j < n; ++j) s -= lu_(i, j) * b[j];
        b[i] = s / lu_(i, i);
    }
    return b;
}

Matrix LuSolver::solve(const Matrix& b) const {
    if (b.rows != lu_.rows) throw ValidationError("LU solve: rhs dimension mismatch");
    Matrix x(b.rows, b.cols);
    Vec col(b.rows);
    for (int j = 0; j < b.cols; ++j) {
        for (int i = 0; i < b.rows; ++i) col[i] = b(i, j);
        Vec sol = solve(col);
        for (int i = 0; i < b.rows; ++i) x(i, j) = sol[i];
    }
    return x;
}

Vec solve_linear(const Matrix& a, const Vec& b) { return LuSolver(a).solve(b); }
Matrix solve_linear(const Matrix& a, const Matrix& b) { return LuSolver(a).solve(b); }
Matrix inverse(const Matrix& a) { return LuSolver(a).solve(Matrix::identity(a.rows)); }

double spectral_radius(const Matrix& x, double rel_tol, int max_iter) {
    if (!x.square()) throw ValidationError("spectral_radius: matrix must be square");
    const int n = x.rows;
    if (n == 0) return 0.0;
    Vec v(static_cast<size_t>(n), 1.0 / n);
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vec w = mat_vec(x, v);
        const double norm = inf_norm(w);
        if (norm <= 1e-300) return 0.0;
        for (double& e : w) e /= norm;
        if (std::abs(norm - lambda) <= rel_tol * std::max(norm, 1e-30) && it > 2) return norm;
        lambda = norm;
        v = std::move(w);
    }
    return lambda;
}

bool is_irreducible(const Matrix& q) {
    if (!q.square()) throw ValidationError("is_irreducible: matrix must be square");
    const int n = q.rows;
    if (n <= 1) return true;
    auto reach_all = [n](auto edge) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v = 0; v < n; ++v)
                if (!seen[v] && edge(u, v)) {
                    seen[v] = 1;
                    ++count;
                    stack.push_back(v);
                }
        }
        return count == n;
    };
    const bool fwd = reach_all([&](int u, int v) { return u != v && q(u, v) != 0.0; });
    const bool bwd = reach_all([&](int u, int v) { return u != v && q(v, u) != 0.0; });
    return fwd && bwd;
}

Vec ctmc_stationary(const Matrix& q, double tol) {
    if (!q.square()) throw ValidationError("ctmc_stationary: generator must be square");
    const int n = q.rows;
    const double scale = std::max(1.0, inf_norm(q));
    const Vec rs = row_sums(q);
    for (int i = 0; i < n; ++i)
        if (std::abs(rs[i]) > 1e-6 * scale)
            throw ValidationError("ctmc_stationary: generator is not conservative (row " +
                                  std::to_string(i) + " sums to " + std::to_string(rs[i]) + ")");
    if (!is_irreducible(q))
        throw ValidationError("ctmc_stationary: generator is reducible");

    // Transposed balance equations with the last one replaced by x e = 1.
    Matrix m = transpose(q);
    for (int j = 0; j < n; ++j) m(n - 1, j) = 1.0;
    Vec rhs(static_cast<size_t>(n), 0.0);
    rhs[n - 1] = 1.0;
    Vec x;
    try {
        x = LuSolver(std::move(m)).solve(rhs);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("ctmc_stationary: singular system (") + e.what() + ")");
    }
    for (double& v : x) {
        if (v < 0.0) {
            if (v < -1e-9) throw NumericalError("ctmc_stationary: negative stationary mass " + std::to_string(v));
            v = 0.0;
        }
    }
    const double total = vec_sum(x);
    for (double& v : x) v /= total;
    const double resid = inf_norm(vec_mat(x, q));
    if (resid > tol * scale)
        throw NumericalError("ctmc_stationary: residual " + std::to_string(resid) + " exceeds tolerance");
    return x;
}

BandedMatrix::BandedMatrix(int n, int kl, int ku)
    : n_(n), kl_(kl), ku_(ku), ldab_(2 * kl + ku + 1),
      ab_(static_cast<size_t>(ldab_) * n, 0.0), piv_(n, 0) {
    if (n <= 0 || kl < 0 || ku < 0) throw ValidationError("BandedMatrix: bad dimensions");
}

void BandedMatrix::add(int i, int j, double v) {
    if (i < 0 || j < 0 || i >= n_ || j >= n_) throw ValidationError("BandedMatrix::add: index out of range");
    if (i - j > kl_ || j - i > ku_) throw ValidationError("BandedMatrix::add: entry outside band");
    at(i, j) += v;
}

double BandedMatrix::get(int i, int j) const {
    if (i - j > kl_ || j - i > ku_ + kl_) return 0.0;
    return at(i, j);
}

void BandedMatrix::factor() {
    // Banded LU with partial pivoting; fill stays within kl extra
    // superdiagonals, which the storage already reserves.
    const int band_up = kl_ + ku_;
    const double scl = [&] {
        double s = 0.0;
        for (double v : ab_) s = std::max(s, std::abs(v));
        return std::max(s, 1.0);
    }();
    for (int k = 0; k < n_; ++k) {
        const int last_row = std::min(n_ - 1, k + kl_);
        int p = k;
        double best = std::abs(at(k, k));
        for (int i = k + 1; i <= last_row; ++i) {
            const double v = std::abs(at(i, k));
            if (v > best) { best = v; p = i; }
        }
        piv_[k] = p;
        if (best <= 1e-300 || best <= 1e-14 * scl)
            throw NumericalError("banded LU: matrix singular to working precision at column " + std::to_string(k));
        const int last_col = std::min(n_ - 1, k + band_up);
        if (p != k)
            for (int j = k; j <= last_col; ++j) std::swap(at(k, j), at(p, j));
        const double pivot = at(k, k);
        for (int i = k + 1; i <= last_row; ++i) {
            const double m = at(i, k) / pivot;
            at(i, k) = m;
            if (m == 0.0) continue;
            for (int j = k + 1; j <= last_col; ++j) at(i, j) -= m * at(k, j);
        }
    }
    factored_ = true;
}

Vec BandedMatrix::solve(Vec b) const {
    if (!factored_) throw NumericalError("banded LU: solve before factor");
    if (static_cast<int>(b.size()) != n_) throw ValidationError("banded solve: rhs dimension mismatch");
    for (int k = 0; k < n_; ++k) {
        if (piv_[k] != k) std::swap(b[k], b[piv_[k]]);
        const int last_row = std::min(n_ - 1, k + kl_);
        for (int i = k + 1; i <= last_row; ++i) b[i] -= at(i, k) * b[k];
    }
    const int band_up = kl_ + ku_;
    for (int i = n_ - 1; i >= 0; --i) {
        double s = b[i];
        const int last_col = std::min(n_ - 1, i + band_up);
        for (int j = i + 1; j <= last_col; ++j) s -= at(i, j) * b[j];
        b[i] = s / at(i, i);
    }
    return b;
}

} // namespace blockqueue
