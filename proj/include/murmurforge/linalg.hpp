#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "murmurforge/parallel.hpp"

namespace murmurforge {

/// Row-major dense matrix of doubles. Small and unsurprising; everything
/// downstream (pointclouds, scatter matrices, NN batches) uses it.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static DenseMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return DenseMatrix();
        DenseMatrix m(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_)
                throw std::invalid_argument("from_rows: ragged rows");
            std::copy(rows[i].begin(), rows[i].end(), m.data_.begin() + i * m.cols_);
        }
        return m;
    }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    DenseMatrix transposed() const {
        DenseMatrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

inline double frobenius_norm(const DenseMatrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

inline double max_abs_offdiag(const DenseMatrix& m) {
    double mx = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (i != j) mx = std::max(mx, std::abs(m(i, j)));
    return mx;
}

/// Sample covariance S = (X - mean)^T (X - mean) / (n - 1), exactly
/// symmetric by construction. Row blocks may be accumulated in parallel;
/// block boundaries are fixed, so the result is thread-count independent.
inline DenseMatrix covariance(const DenseMatrix& X) {
    const std::size_t n = X.rows(), m = X.cols();
    if (n < 2) throw std::invalid_argument("covariance: need at least 2 rows");

    std::vector<double> mean(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = X.row(i);
        for (std::size_t j = 0; j < m; ++j) mean[j] += r[j];
    }
    for (double& v : mean) v /= static_cast<double>(n);

    constexpr std::size_t kBlock = 4096;
    const std::size_t nblocks = (n + kBlock - 1) / kBlock;
    std::vector<DenseMatrix> partial(nblocks);
    parallel_blocks(n, kBlock, [&](std::size_t b, std::size_t begin, std::size_t end) {
        DenseMatrix acc(m, m);
        std::vector<double> c(m);
        for (std::size_t i = begin; i < end; ++i) {
            auto r = X.row(i);
            for (std::size_t j = 0; j < m; ++j) c[j] = r[j] - mean[j];
            for (std::size_t j = 0; j < m; ++j) {
                const double cj = c[j];
                for (std::size_t k = j; k < m; ++k) acc(j, k) += cj * c[k];
            }
        }
        partial[b] = std::move(acc);
    });

    DenseMatrix S(m, m);
    for (const auto& acc : partial)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = j; k < m; ++k) S(j, k) += acc(j, k);
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = j; k < m; ++k) {
            S(j, k) *= inv;
            S(k, j) = S(j, k);
        }
    return S;
}

/// Eigendecomposition of a symmetric matrix: eigenvalues descending,
/// eigenvector columns aligned and orthonormal.
struct SymEigen {
    std::vector<double> eigenvalues;
    DenseMatrix eigenvectors;  // column i pairs with eigenvalues[i]
};

/// Cyclic Jacobi. Sweeps until max |off-diagonal| <= 1e-12 * ||S||_F or
/// 100 sweeps. Ties in the descending sort keep rotation order (stable),
/// and each eigenvector is sign-normalized so its largest-magnitude entry
/// is positive, giving reproducible components across runs.
inline SymEigen sym_eigen(const DenseMatrix& S) {
    const std::size_t n = S.rows();
    if (n != S.cols()) throw std::invalid_argument("sym_eigen: matrix not square");
    if (!S.all_finite()) throw std::invalid_argument("sym_eigen: non-finite entries");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(S(i, j) - S(j, i)) > 1e-10 * (1.0 + std::abs(S(i, j))))
                throw std::invalid_argument("sym_eigen: matrix not symmetric");

    DenseMatrix B = S;
    DenseMatrix Q = DenseMatrix::identity(n);
    const double stop = 1e-12 * frobenius_norm(S);

    for (int sweep = 0; sweep < 100; ++sweep) {
        if (max_abs_offdiag(B) <= stop) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double bpq = B(p, q);
                if (bpq == 0.0) continue;
                const double theta = (B(q, q) - B(p, p)) / (2.0 * bpq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double bkp = B(k, p), bkq = B(k, q);
                    B(k, p) = c * bkp - s * bkq;
                    B(k, q) = s * bkp + c * bkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double bpk = B(p, k), bqk = B(q, k);
                    B(p, k) = c * bpk - s * bqk;
                    B(q, k) = s * bpk + c * bqk;
                }
                B(p, q) = 0.0;
                B(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double qkp = Q(k, p), qkq = Q(k, q);
                    Q(k, p) = c * qkp - s * qkq;
                    Q(k, q) = s * qkp + c * qkq;
                }
            }
        }
    }

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return B(a, a) > B(b, b); });

    SymEigen out;
    out.eigenvalues.resize(n);
    out.eigenvectors = DenseMatrix(n, n);
    for (std::size_t col = 0; col < n; ++col) {
        const std::size_t src = idx[col];
        out.eigenvalues[col] = B(src, src);
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double a = std::abs(Q(k, src));
            if (a > best) {
                best = a;
                arg = k;
            }
        }
        const double sign = Q(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < n; ++k) out.eigenvectors(k, col) = sign * Q(k, src);
    }
    return out;
}

/// Lower-triangular L with (S + ridge*I) = L L^T. Throws if a pivot is
/// not positive, i.e. the ridged matrix is not SPD.
inline DenseMatrix cholesky(const DenseMatrix& S, double ridge = 0.0) {
    const std::size_t n = S.rows();
    if (n != S.cols()) throw std::invalid_argument("cholesky: matrix not square");
    if (ridge < 0.0) throw std::invalid_argument("cholesky: ridge must be non-negative");
    DenseMatrix L(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = S(i, j) + (i == j ? ridge : 0.0);
            for (std::size_t k = 0; k < j; ++k) sum -= L(i, k) * L(j, k);
            if (i == j) {
                if (sum <= 0.0)
                    throw std::runtime_error("cholesky: matrix not positive definite at pivot " +
                                             std::to_string(i));
                L(i, i) = std::sqrt(sum);
            } else {
                L(i, j) = sum / L(j, j);
            }
        }
    }
    return L;
}

/// Solves L y = b with L lower-triangular.
inline std::vector<double> forward_substitute(const DenseMatrix& L, std::span<const double> b) {
    const std::size_t n = L.rows();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= L(i, k) * y[k];
        y[i] = s / L(i, i);
    }
    return y;
}

/// Solves L^T x = y with L lower-triangular.
inline std::vector<double> back_substitute(const DenseMatrix& L, std::span<const double> y) {
    const std::size_t n = L.rows();
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= L(k, i) * x[k];
        x[i] = s / L(i, i);
    }
    return x;
}

/// Solves (L L^T) x = b.
inline std::vector<double> cholesky_solve(const DenseMatrix& L, std::span<const double> b) {
    auto y = forward_substitute(L, b);
    return back_substitute(L, y);
}

} // namespace murmurforge
