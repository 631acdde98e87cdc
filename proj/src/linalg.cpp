#include "quadrom/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "quadrom/errors.hpp"

namespace quadrom {

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    DenseMatrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw InvalidInput("DenseMatrix::from_rows: ragged rows");
        std::copy(row.begin(), row.end(), m.data() + i * c);
        ++i;
    }
    return m;
}

bool DenseMatrix::all_finite() const {
    return std::all_of(entries_.begin(), entries_.end(),
                       [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double frobenius_norm(const DenseMatrix& a) { return norm2(a.entries()); }

double max_abs(const DenseMatrix& a) {
    double m = 0.0;
    for (double x : a.entries()) m = std::max(m, std::abs(x));
    return m;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimensions disagree");
    DenseMatrix c(a.rows(), b.cols());
    // i-k-j order keeps the inner loop contiguous in both b and c.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.data() + i * c.cols();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* bk = b.data() + k * b.cols();
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw InvalidInput("matvec: dimension mismatch");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
    return y;
}

namespace {

constexpr int kJacobiSweepCap = 60;
constexpr double kPairTol = 1e-14;       // relative off-diagonal threshold
constexpr double kZeroColumnTol = 1e-14; // times ||A||_F: column treated as zero

// One-sided Jacobi on the columns of w (m x n, m >= n). Rotations accumulate
// into v (n x n, starts as identity). On return the columns of w are mutually
// orthogonal; their norms are the singular values.
void jacobi_orthogonalize(DenseMatrix& w, DenseMatrix& v, double frob) {
    const std::size_t m = w.rows(), n = w.cols();
    const double zero_norm2 = (kZeroColumnTol * frob) * (kZeroColumnTol * frob);

    std::vector<double> col_norm2(n, 0.0);

    for (int sweep = 0; sweep < kJacobiSweepCap; ++sweep) {
        bool rotated = false;
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += w(i, j) * w(i, j);
            col_norm2[j] = s;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = col_norm2[p];
                const double beta = col_norm2[q];
                if (alpha <= zero_norm2 || beta <= zero_norm2) continue;
                double gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) gamma += w(i, p) * w(i, q);
                if (std::abs(gamma) <= kPairTol * std::sqrt(alpha * beta)) continue;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;

                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
                col_norm2[p] = alpha - t * gamma;
                col_norm2[q] = beta + t * gamma;
                rotated = true;
            }
        }
        if (!rotated) return;
    }
    throw NumericalFailure("thin_svd: Jacobi sweeps did not converge within cap");
}

// Fills zero-singular-value columns of u with vectors orthonormal to all
// existing columns (modified Gram-Schmidt against unit basis candidates).
void complete_basis(DenseMatrix& u, const std::vector<bool>& is_zero) {
    const std::size_t m = u.rows(), k = u.cols();
    std::size_t candidate = 0;
    for (std::size_t j = 0; j < k; ++j) {
        if (!is_zero[j]) continue;
        std::vector<double> vec(m, 0.0);
        while (true) {
            if (candidate >= m)
                throw NumericalFailure("thin_svd: could not complete orthonormal basis");
            std::fill(vec.begin(), vec.end(), 0.0);
            vec[candidate++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t c = 0; c < k; ++c) {
                    if (is_zero[c] && c >= j) continue;  // not yet filled
                    double proj = 0.0;
                    for (std::size_t i = 0; i < m; ++i) proj += vec[i] * u(i, c);
                    for (std::size_t i = 0; i < m; ++i) vec[i] -= proj * u(i, c);
                }
            }
            const double nrm = norm2(vec);
            if (nrm > 0.5) {  // candidate was not (nearly) in the span
                for (std::size_t i = 0; i < m; ++i) u(i, j) = vec[i] / nrm;
                break;
            }
        }
    }
}

void apply_sign_convention(DenseMatrix& u, DenseMatrix& v) {
    for (std::size_t j = 0; j < u.cols(); ++j) {
        double best = 0.0;
        for (std::size_t i = 0; i < u.rows(); ++i) best = std::max(best, std::abs(u(i, j)));
        std::size_t arg = 0;
        for (std::size_t i = 0; i < u.rows(); ++i) {
            if (std::abs(u(i, j)) == best) {
                arg = i;
                break;
            }
        }
        if (u(arg, j) < 0.0) {
            for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) = -u(i, j);
            for (std::size_t i = 0; i < v.rows(); ++i) v(i, j) = -v(i, j);
        }
    }
}

ThinSvd thin_svd_tall(const DenseMatrix& a) {
    const std::size_t m = a.rows(), n = a.cols();
    DenseMatrix w = a;
    DenseMatrix v = DenseMatrix::identity(n);
    const double frob = frobenius_norm(a);

    if (frob > 0.0) jacobi_orthogonalize(w, v, frob);

    std::vector<double> sigma(n, 0.0);
    std::vector<bool> is_zero(n, false);
    DenseMatrix u(m, n);
    const double zero_tol = kZeroColumnTol * frob;
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += w(i, j) * w(i, j);
        s = std::sqrt(s);
        if (s <= zero_tol) {
            sigma[j] = 0.0;
            is_zero[j] = true;
        } else {
            sigma[j] = s;
            for (std::size_t i = 0; i < m; ++i) u(i, j) = w(i, j) / s;
        }
    }

    // Sort non-increasing; stable so equal values keep Jacobi order.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    ThinSvd out;
    out.u = DenseMatrix(m, n);
    out.v = DenseMatrix(n, n);
    out.singular_values.resize(n);
    std::vector<bool> zero_sorted(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.singular_values[j] = sigma[src];
        zero_sorted[j] = is_zero[src];
        for (std::size_t i = 0; i < m; ++i) out.u(i, j) = u(i, src);
        for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
    }

    complete_basis(out.u, zero_sorted);
    apply_sign_convention(out.u, out.v);
    return out;
}

}  // namespace

ThinSvd thin_svd(const DenseMatrix& a) {
    if (a.rows() == 0 || a.cols() == 0) throw InvalidInput("thin_svd: empty matrix");
    if (!a.all_finite()) throw InvalidInput("thin_svd: non-finite entries");
    if (a.rows() >= a.cols()) return thin_svd_tall(a);
    ThinSvd t = thin_svd_tall(transpose(a));
    // A^T = U' S V'^T  =>  A = V' S U'^T; redo the sign convention on the
    // swapped factors so it always refers to U of A.
    ThinSvd out{std::move(t.v), std::move(t.singular_values), std::move(t.u)};
    apply_sign_convention(out.u, out.v);
    return out;
}

DenseMatrix lstsq(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows()) throw InvalidInput("lstsq: row counts disagree");
    ThinSvd svd = thin_svd(a);
    const std::size_t k = svd.singular_values.size();
    const double cutoff = 1e-12 * (k ? svd.singular_values[0] : 0.0);

    DenseMatrix utb = matmul(transpose(svd.u), b);  // k x nrhs
    for (std::size_t i = 0; i < k; ++i) {
        const double s = svd.singular_values[i];
        const double inv = (s > cutoff && s > 0.0) ? 1.0 / s : 0.0;
        for (std::size_t j = 0; j < utb.cols(); ++j) utb(i, j) *= inv;
    }
    return matmul(svd.v, utb);
}

DenseMatrix lu_solve(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != a.cols()) throw InvalidInput("lu_solve: matrix not square");
    if (a.rows() != b.rows()) throw InvalidInput("lu_solve: row counts disagree");
    const std::size_t n = a.rows(), nrhs = b.cols();
    DenseMatrix lu = a;
    DenseMatrix x = b;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::abs(lu(col, col));
        for (std::size_t i = col + 1; i < n; ++i) {
            const double v = std::abs(lu(i, col));
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (!(best > 0.0) || !std::isfinite(best))
            throw NumericalFailure("lu_solve: singular matrix");
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(piv, j));
            for (std::size_t j = 0; j < nrhs; ++j) std::swap(x(col, j), x(piv, j));
        }
        const double d = lu(col, col);
        for (std::size_t i = col + 1; i < n; ++i) {
            const double f = lu(i, col) / d;
            if (f == 0.0) continue;
            lu(i, col) = f;
            for (std::size_t j = col + 1; j < n; ++j) lu(i, j) -= f * lu(col, j);
            for (std::size_t j = 0; j < nrhs; ++j) x(i, j) -= f * x(col, j);
        }
    }
    for (std::size_t col = n; col-- > 0;) {
        for (std::size_t j = 0; j < nrhs; ++j) x(col, j) /= lu(col, col);
        for (std::size_t i = 0; i < col; ++i) {
            const double f = lu(i, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < nrhs; ++j) x(i, j) -= f * x(col, j);
        }
    }
    return x;
}

}  // namespace quadrom
