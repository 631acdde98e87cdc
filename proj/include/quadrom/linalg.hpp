#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace quadrom {

/// Dense row-major matrix of 64-bit reals.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return entries_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return entries_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }

    /// Resize without preserving contents; reuses storage when possible.
    void reshape(std::size_t rows, std::size_t cols) {
        rows_ = rows;
        cols_ = cols;
        entries_.resize(rows * cols);
    }

    std::span<double> row(std::size_t i) { return {entries_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {entries_.data() + i * cols_, cols_}; }

    double* data() { return entries_.data(); }
    const double* data() const { return entries_.data(); }
    const std::vector<double>& entries() const { return entries_; }

    bool all_finite() const;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> entries_;
};

/// Result of a thin singular value decomposition A = U diag(s) V^T.
struct ThinSvd {
    DenseMatrix u;                       // rows(A) x k
    std::vector<double> singular_values; // k, non-increasing
    DenseMatrix v;                       // cols(A) x k
};

/// Thin SVD by one-sided Jacobi rotations, k = min(rows, cols).
///
/// Deterministic: singular values sorted non-increasing, and each column of U
/// has its largest-magnitude entry non-negative (first such entry on ties).
/// Throws InvalidInput on non-finite entries, NumericalFailure if the sweep
/// cap is exhausted before convergence.
ThinSvd thin_svd(const DenseMatrix& a);

/// Minimum-Frobenius-norm X minimizing ||A X - B||_F, via the SVD
/// pseudoinverse. Singular values below 1e-12 * s_max are treated as zero.
DenseMatrix lstsq(const DenseMatrix& a, const DenseMatrix& b);

/// Solves the square system A X = B by LU with partial pivoting.
/// Throws NumericalFailure when a pivot collapses to zero.
DenseMatrix lu_solve(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);
std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x);

double frobenius_norm(const DenseMatrix& a);
double max_abs(const DenseMatrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

}  // namespace quadrom
