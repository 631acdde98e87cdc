#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "quadrom/linalg.hpp"

namespace quadrom {

/// Number of pairwise products without repetition: r (r + 1) / 2.
constexpr std::size_t quad_size(std::size_t r) { return r * (r + 1) / 2; }

/// Pairwise products of reduced coefficients, stacked by blocks: block i
/// (0-based, length i + 1) is a_i * (a_0, ..., a_i).
std::vector<double> pairwise_products(std::span<const double> coeffs);

/// Discrete quadratic correction operator fitted by least squares.
struct QuadOperatorLS {
    DenseMatrix matrix;  // (n_dof * d_field) x quad_size(r)
    std::size_t r = 0;
};

/// Fits tau_j ~= C_hat * pairwise_products(a_j) over all training snapshots,
/// minimum-norm when underdetermined. Corrections are the columns of the
/// stacked system; the factorization of the coefficient matrix is shared by
/// every output row.
QuadOperatorLS fit_quad_ls(const std::vector<std::vector<double>>& corrections,
                           const std::vector<std::vector<double>>& reduced_coeffs);

std::vector<double> eval_correction_ls(const QuadOperatorLS& op,
                                       std::span<const double> coeffs);

}  // namespace quadrom
