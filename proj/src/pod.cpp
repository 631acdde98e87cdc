#include "quadrom/pod.hpp"

#include <cmath>

#include "quadrom/errors.hpp"

namespace quadrom {

void SnapshotSet::validate() const {
    if (n_mu() == 0) throw InvalidInput("SnapshotSet: no snapshots");
    if (n_dof() == 0) throw InvalidInput("SnapshotSet: no points");
    if (d_field == 0) throw InvalidInput("SnapshotSet: d_field must be >= 1");
    if (fields.size() != n_mu())
        throw InvalidInput("SnapshotSet: field count differs from parameter count");
    for (const auto& f : fields) {
        if (f.size() != field_size())
            throw InvalidInput("SnapshotSet: snapshot length differs from n_dof * d_field");
    }
    for (std::size_t i = 0; i < n_mu(); ++i) {
        for (std::size_t j = i + 1; j < n_mu(); ++j) {
            bool same = true;
            for (std::size_t k = 0; k < d_mu(); ++k) {
                if (params(i, k) != params(j, k)) {
                    same = false;
                    break;
                }
            }
            if (same) throw InvalidInput("SnapshotSet: duplicate parameter vectors");
        }
    }
}

std::vector<double> PodBasis::mode_values_at(std::size_t node) const {
    std::vector<double> out(r() * d_field);
    for (std::size_t k = 0; k < r(); ++k)
        for (std::size_t c = 0; c < d_field; ++c)
            out[k * d_field + c] = modes(node * d_field + c, k);
    return out;
}

RbfKernel rbf_kernel_from_string(const std::string& name) {
    if (name == "linear") return RbfKernel::Linear;
    if (name == "tps" || name == "thin-plate-spline") return RbfKernel::ThinPlateSpline;
    throw InvalidInput("unknown RBF kernel: " + name);
}

std::string to_string(RbfKernel kind) {
    return kind == RbfKernel::Linear ? "linear" : "tps";
}

DenseMatrix assemble_snapshot_matrix(const SnapshotSet& set) {
    set.validate();
    DenseMatrix s(set.field_size(), set.n_mu());
    for (std::size_t j = 0; j < set.n_mu(); ++j)
        for (std::size_t i = 0; i < set.field_size(); ++i) s(i, j) = set.fields[j][i];
    return s;
}

PodBasis compute_pod(const DenseMatrix& snapshot_matrix, std::size_t r,
                     const DenseMatrix& points, std::size_t d_field) {
    if (r < 1 || r > std::min(snapshot_matrix.rows(), snapshot_matrix.cols()))
        throw InvalidInput("compute_pod: r out of range");
    ThinSvd svd = thin_svd(snapshot_matrix);
    PodBasis basis;
    basis.modes = DenseMatrix(snapshot_matrix.rows(), r);
    for (std::size_t i = 0; i < snapshot_matrix.rows(); ++i)
        for (std::size_t k = 0; k < r; ++k) basis.modes(i, k) = svd.u(i, k);
    basis.singular_values.assign(svd.singular_values.begin(),
                                 svd.singular_values.begin() + r);
    basis.points = points;
    basis.d_field = d_field;
    return basis;
}

PodBasis compute_pod(const SnapshotSet& set, std::size_t r) {
    return compute_pod(assemble_snapshot_matrix(set), r, set.points, set.d_field);
}

std::vector<double> project(const PodBasis& basis, std::span<const double> field) {
    if (field.size() != basis.modes.rows())
        throw InvalidInput("project: field length differs from basis rows");
    std::vector<double> a(basis.r(), 0.0);
    for (std::size_t i = 0; i < basis.modes.rows(); ++i) {
        const double ui = field[i];
        if (ui == 0.0) continue;
        const double* mi = basis.modes.data() + i * basis.r();
        for (std::size_t k = 0; k < basis.r(); ++k) a[k] += mi[k] * ui;
    }
    return a;
}

std::vector<double> reconstruct(const PodBasis& basis, std::span<const double> coeffs) {
    if (coeffs.size() != basis.r())
        throw InvalidInput("reconstruct: coefficient length differs from r");
    std::vector<double> u(basis.modes.rows(), 0.0);
    for (std::size_t i = 0; i < basis.modes.rows(); ++i)
        u[i] = dot(basis.modes.row(i), coeffs);
    return u;
}

std::vector<double> exact_correction(std::span<const double> field,
                                     std::span<const double> reconstruction) {
    if (field.size() != reconstruction.size())
        throw InvalidInput("exact_correction: length mismatch");
    std::vector<double> tau(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) tau[i] = field[i] - reconstruction[i];
    return tau;
}

double kernel_eval(RbfKernel kind, double dist) {
    if (dist < 0.0) throw InvalidInput("kernel_eval: negative distance");
    switch (kind) {
        case RbfKernel::Linear:
            return dist;
        case RbfKernel::ThinPlateSpline:
            return dist == 0.0 ? 0.0 : dist * dist * std::log(dist);
    }
    throw InvalidInput("kernel_eval: unknown kernel");
}

namespace {

double param_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

DenseMatrix kernel_matrix(const DenseMatrix& centers, RbfKernel kind) {
    const std::size_t n = centers.rows();
    DenseMatrix k(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            k(i, j) = kernel_eval(kind, param_distance(centers.row(i), centers.row(j)));
    return k;
}

}  // namespace

RbfInterpolant rbf_fit(const DenseMatrix& centers, const DenseMatrix& values,
                       RbfKernel kind) {
    const std::size_t n = centers.rows();
    if (n == 0) throw InvalidInput("rbf_fit: no centers");
    if (values.rows() != n) throw InvalidInput("rbf_fit: value count differs from centers");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (param_distance(centers.row(i), centers.row(j)) == 0.0)
                throw InvalidInput("rbf_fit: duplicate centers");

    // Both kernels vanish at zero distance, so a single center cannot carry
    // its own value through the expansion; fall back to the constant
    // interpolant (see rbf_eval).
    if (n == 1) {
        RbfInterpolant interp;
        interp.kernel = kind;
        interp.centers = centers;
        interp.weights = values;
        return interp;
    }

    DenseMatrix k = kernel_matrix(centers, kind);

    // Ridge jitter against near-singular systems. Both supported kernels have
    // phi(0) = 0, so trace(K)/n is identically zero; fall back to the largest
    // kernel entry as the scale in that case.
    const std::size_t nn = n;
    double trace = 0.0;
    for (std::size_t i = 0; i < nn; ++i) trace += k(i, i);
    double scale = trace / static_cast<double>(nn);
    if (scale <= 0.0) scale = max_abs(k);
    const double jitter = 1e-12 * scale;
    for (std::size_t i = 0; i < nn; ++i) k(i, i) += jitter;

    RbfInterpolant interp;
    interp.kernel = kind;
    interp.centers = centers;
    interp.weights = lu_solve(k, values);

    // The contract is interpolation at the centers; verify it rather than
    // trusting the solve on an ill-conditioned system.
    std::vector<double> col_scale(values.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t col = 0; col < values.cols(); ++col)
            col_scale[col] = std::max(col_scale[col], std::abs(values(i, col)));
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> pred = rbf_eval(interp, centers.row(i));
        for (std::size_t col = 0; col < values.cols(); ++col) {
            if (col_scale[col] == 0.0) continue;
            if (std::abs(pred[col] - values(i, col)) > 1e-8 * col_scale[col])
                throw NumericalFailure("rbf_fit: interpolation conditions not met");
        }
    }
    return interp;
}

std::vector<double> rbf_eval(const RbfInterpolant& interp, std::span<const double> mu) {
    if (mu.size() != interp.centers.cols())
        throw InvalidInput("rbf_eval: parameter dimension mismatch");
    if (interp.centers.rows() == 1) {
        const auto row = interp.weights.row(0);
        return {row.begin(), row.end()};
    }
    std::vector<double> out(interp.weights.cols(), 0.0);
    for (std::size_t i = 0; i < interp.centers.rows(); ++i) {
        const double phi =
            kernel_eval(interp.kernel, param_distance(mu, interp.centers.row(i)));
        if (phi == 0.0) continue;
        const double* wi = interp.weights.data() + i * interp.weights.cols();
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += phi * wi[c];
    }
    return out;
}

}  // namespace quadrom
