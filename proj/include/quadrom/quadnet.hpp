#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "quadrom/linalg.hpp"
#include "quadrom/mlp.hpp"
#include "quadrom/pod.hpp"
#include "quadrom/quadls.hpp"

namespace quadrom {

/// Componentwise affine map y = (x - offset) * scale.
struct Normalizer {
    std::vector<double> offset, scale;
    void apply(std::span<const double> in, std::span<double> out) const;
};

/// How raw per-point mode values (r * d_field, mode-major) become the branch
/// input. FlattenComponents keeps all of them; ModeMagnitude reduces each
/// mode to the Euclidean norm of its components, giving input size r.
enum class BranchInput { FlattenComponents, ModeMagnitude };

struct QuadNetArch {
    std::size_t hidden_layers = 7;
    std::size_t hidden_width = 20;
    std::size_t latent_dim = 0;  // 0 -> quad_size(r)
    BranchInput branch_input = BranchInput::FlattenComponents;
    bool combiner_output_tanh = false;
};

/// Training data for the correction networks: node subset of the mesh plus
/// per-snapshot reduced coefficients and exact corrections on that subset.
struct CorrectionTrainingSet {
    DenseMatrix coords;       // n_pts x d, raw coordinates
    DenseMatrix mode_values;  // n_pts x (r * d_field), raw mode values
    DenseMatrix params;       // n_snap x d_mu, raw parameters
    std::vector<std::vector<double>> reduced_coeffs;  // n_snap entries of r
    std::vector<std::vector<double>> corrections;     // n_snap entries of n_pts * d_field
    std::size_t r = 0;
    std::size_t d_field = 1;

    std::size_t n_pts() const { return coords.rows(); }
    std::size_t n_snap() const { return reduced_coeffs.size(); }
};

/// Assembles the training set from a basis and snapshots, restricted to the
/// given mesh nodes (all nodes when the list is empty). Reduced coefficients
/// and corrections are computed on the full mesh first; only the correction
/// samples and inputs are restricted.
CorrectionTrainingSet make_training_set(const PodBasis& basis, const SnapshotSet& snaps,
                                        std::span<const std::size_t> nodes = {});

/// Space-continuous quadratic correction operator: a branch network over
/// local mode values and a trunk network over coordinates, merged by
/// elementwise product and mapped to the operator row by a combiner network.
struct QuadNetModel {
    Mlp branch, trunk, combiner;
    std::size_t r = 0, d = 0, d_field = 1, latent_dim = 0;
    BranchInput branch_input = BranchInput::FlattenComponents;
    Normalizer mode_norm, coord_norm;

    std::size_t s_quad() const { return quad_size(r); }
    std::size_t output_size() const { return s_quad() * d_field; }
};

/// Parameter-aware variant with a second branch network over mu.
struct QuadNetMuModel {
    Mlp branch1, branch2, trunk, combiner;
    std::size_t r = 0, d = 0, d_mu = 1, d_field = 1, latent_dim = 0;
    BranchInput branch_input = BranchInput::FlattenComponents;
    Normalizer mode_norm, coord_norm, param_norm;

    std::size_t s_quad() const { return quad_size(r); }
    std::size_t output_size() const { return s_quad() * d_field; }
};

/// Builds a model with normalizers fitted to the training set. Sub-network
/// weights are seeded independently from `seed`.
QuadNetModel make_quadnet(const CorrectionTrainingSet& data, const QuadNetArch& arch,
                          std::uint64_t seed);
QuadNetMuModel make_quadnet_mu(const CorrectionTrainingSet& data, const QuadNetArch& arch,
                               std::uint64_t seed);

/// Operator row at one point: combiner(branch(modes) . trunk(x)), length
/// s_quad * d_field. Inputs are raw; normalization happens inside.
/// `modes_at_x` carries r * d_field values.
std::vector<double> quadnet_eval(const QuadNetModel& model,
                                 std::span<const double> modes_at_x,
                                 std::span<const double> x);
std::vector<double> quadnet_mu_eval(const QuadNetMuModel& model,
                                    std::span<const double> modes_at_x,
                                    std::span<const double> x,
                                    std::span<const double> mu);

/// Correction field over a batch of points: per point and field component,
/// the dot product of pairwise_products(a) with the matching operator block.
/// Output is point-major, length n_pts * d_field.
std::vector<double> predict_correction(const QuadNetModel& model,
                                       const DenseMatrix& mode_values,
                                       const DenseMatrix& coords,
                                       std::span<const double> coeffs);
std::vector<double> predict_correction(const QuadNetMuModel& model,
                                       const DenseMatrix& mode_values,
                                       const DenseMatrix& coords,
                                       std::span<const double> coeffs,
                                       std::span<const double> mu);

/// Convenience overloads evaluating on the basis's own mesh nodes.
std::vector<double> predict_correction(const QuadNetModel& model, const PodBasis& basis,
                                       std::span<const double> coeffs);
std::vector<double> predict_correction(const QuadNetMuModel& model, const PodBasis& basis,
                                       std::span<const double> coeffs,
                                       std::span<const double> mu);

/// Mean over snapshots of |pred - exact|^2 / |exact|^2. Snapshots whose
/// exact-correction norm-square falls below 1e-30 are excluded with a
/// warning; if every snapshot is degenerate, throws DegenerateTarget.
double relative_loss(const std::vector<std::vector<double>>& pred,
                     const std::vector<std::vector<double>>& exact);

std::size_t parameter_count(const QuadNetModel& model);
std::size_t parameter_count(const QuadNetMuModel& model);
void get_parameters(const QuadNetModel& model, std::span<double> out);
void get_parameters(const QuadNetMuModel& model, std::span<double> out);
void set_parameters(QuadNetModel& model, std::span<const double> in);
void set_parameters(QuadNetMuModel& model, std::span<const double> in);

struct LossAndGradients {
    double loss = 0.0;
    std::vector<double> gradients;  // flat, ordered like get_parameters
};

/// Exact reverse-mode gradients of the relative loss over the training set.
LossAndGradients loss_and_gradients(const QuadNetModel& model,
                                    const CorrectionTrainingSet& data);
LossAndGradients loss_and_gradients(const QuadNetMuModel& model,
                                    const CorrectionTrainingSet& data);

}  // namespace quadrom
