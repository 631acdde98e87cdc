#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "quadrom/linalg.hpp"

namespace quadrom {

/// Parameterized field samples on a point cloud. Each field holds
/// n_dof * d_field values in point-major order (all components of point 0,
/// then point 1, ...).
struct SnapshotSet {
    std::string name;
    DenseMatrix points;                       // n_dof x d
    DenseMatrix params;                       // n_mu x d_mu
    std::vector<std::vector<double>> fields;  // n_mu entries of n_dof * d_field
    std::size_t d_field = 1;
    std::string generator = "external";       // provenance, kept in the manifest
    std::uint64_t gen_seed = 0;

    std::size_t n_dof() const { return points.rows(); }
    std::size_t d() const { return points.cols(); }
    std::size_t n_mu() const { return params.rows(); }
    std::size_t d_mu() const { return params.cols(); }
    std::size_t field_size() const { return n_dof() * d_field; }

    /// Throws InvalidInput if shapes disagree or parameter vectors repeat.
    void validate() const;
};

/// Truncated POD basis: orthonormal modes with their singular values, plus
/// the point cloud the modes are sampled on.
struct PodBasis {
    DenseMatrix modes;                   // (n_dof * d_field) x r
    std::vector<double> singular_values; // r, non-increasing
    DenseMatrix points;                  // n_dof x d
    std::size_t d_field = 1;

    std::size_t r() const { return modes.cols(); }
    std::size_t n_dof() const { return points.rows(); }

    /// Mode values at mesh node i: r * d_field reals, mode-major
    /// (mode 0 components, mode 1 components, ...).
    std::vector<double> mode_values_at(std::size_t node) const;
};

enum class RbfKernel { Linear, ThinPlateSpline };

RbfKernel rbf_kernel_from_string(const std::string& name);
std::string to_string(RbfKernel kind);

/// Radial interpolant from parameter space to reduced coefficients.
struct RbfInterpolant {
    RbfKernel kernel = RbfKernel::Linear;
    DenseMatrix centers;  // n_mu x d_mu
    DenseMatrix weights;  // n_mu x r
};

/// Stacks the snapshots into the (n_dof * d_field) x n_mu matrix whose
/// column j is snapshot j flattened point-major.
DenseMatrix assemble_snapshot_matrix(const SnapshotSet& set);

/// First r left singular vectors and singular values of the snapshot matrix.
PodBasis compute_pod(const DenseMatrix& snapshot_matrix, std::size_t r,
                     const DenseMatrix& points, std::size_t d_field);
PodBasis compute_pod(const SnapshotSet& set, std::size_t r);

/// a = modes^T u.
std::vector<double> project(const PodBasis& basis, std::span<const double> field);

/// u = modes a.
std::vector<double> reconstruct(const PodBasis& basis, std::span<const double> coeffs);

/// tau = u - u_tilde, elementwise.
std::vector<double> exact_correction(std::span<const double> field,
                                     std::span<const double> reconstruction);

/// Kernel profile: Linear -> d, ThinPlateSpline -> d^2 log d (0 at d = 0).
double kernel_eval(RbfKernel kind, double dist);

/// Interpolates values (one row per center) exactly at the centers.
/// Throws InvalidInput on duplicate centers, NumericalFailure when the
/// regularized kernel system cannot reproduce the data.
RbfInterpolant rbf_fit(const DenseMatrix& centers, const DenseMatrix& values,
                       RbfKernel kind);

std::vector<double> rbf_eval(const RbfInterpolant& interp, std::span<const double> mu);

}  // namespace quadrom
