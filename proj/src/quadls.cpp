#include "quadrom/quadls.hpp"

#include "quadrom/errors.hpp"

namespace quadrom {

std::vector<double> pairwise_products(std::span<const double> coeffs) {
    const std::size_t r = coeffs.size();
    if (r == 0) throw InvalidInput("pairwise_products: empty coefficient vector");
    std::vector<double> out;
    out.reserve(quad_size(r));
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j <= i; ++j) out.push_back(coeffs[i] * coeffs[j]);
    return out;
}

QuadOperatorLS fit_quad_ls(const std::vector<std::vector<double>>& corrections,
                           const std::vector<std::vector<double>>& reduced_coeffs) {
    const std::size_t n_mu = corrections.size();
    if (n_mu == 0 || reduced_coeffs.size() != n_mu)
        throw InvalidInput("fit_quad_ls: snapshot counts disagree");
    const std::size_t r = reduced_coeffs[0].size();
    const std::size_t s = quad_size(r);
    const std::size_t n_rows = corrections[0].size();
    for (std::size_t j = 0; j < n_mu; ++j) {
        if (reduced_coeffs[j].size() != r)
            throw InvalidInput("fit_quad_ls: reduced coefficient lengths disagree");
        if (corrections[j].size() != n_rows)
            throw InvalidInput("fit_quad_ls: correction lengths disagree");
    }

    // Stack the quadratic feature rows and solve A_tilde C_hat^T ~= T^T for
    // all output rows at once.
    DenseMatrix a_tilde(n_mu, s);
    for (std::size_t j = 0; j < n_mu; ++j) {
        const std::vector<double> q = pairwise_products(reduced_coeffs[j]);
        for (std::size_t k = 0; k < s; ++k) a_tilde(j, k) = q[k];
    }
    DenseMatrix t_t(n_mu, n_rows);
    for (std::size_t j = 0; j < n_mu; ++j)
        for (std::size_t i = 0; i < n_rows; ++i) t_t(j, i) = corrections[j][i];

    QuadOperatorLS op;
    op.r = r;
    op.matrix = transpose(lstsq(a_tilde, t_t));
    return op;
}

std::vector<double> eval_correction_ls(const QuadOperatorLS& op,
                                       std::span<const double> coeffs) {
    if (coeffs.size() != op.r)
        throw InvalidInput("eval_correction_ls: coefficient length differs from r");
    return matvec(op.matrix, pairwise_products(coeffs));
}

}  // namespace quadrom
