#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "quadrom/linalg.hpp"

namespace quadrom {

enum class Activation { Identity, Tanh };

/// Fully connected feed-forward network: tanh on hidden layers, configurable
/// activation on the output layer (identity by default). weights[l] has
/// shape layer_sizes[l] x layer_sizes[l+1]; the forward map per layer is
/// y_j = sum_k x_k W[k][j] + b_j.
struct Mlp {
    std::vector<std::size_t> layer_sizes;
    std::vector<DenseMatrix> weights;
    std::vector<std::vector<double>> biases;
    Activation output_activation = Activation::Identity;

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    std::size_t n_layers() const { return weights.size(); }
};

/// Glorot-uniform weights (+-sqrt(6 / (fan_in + fan_out))), zero biases.
/// Deterministic given the seed.
Mlp mlp_init(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed,
             Activation output_activation = Activation::Identity);

std::vector<double> mlp_forward(const Mlp& net, std::span<const double> input);

/// Post-activation values per layer for a batch; index 0 is the input batch.
struct MlpCache {
    std::vector<DenseMatrix> activations;
};

/// Batched forward, one input per row. Returns the output batch
/// (cache.activations.back()). Cache buffers are reused across calls.
const DenseMatrix& mlp_forward_batch(const Mlp& net, const DenseMatrix& input,
                                     MlpCache& cache);

struct MlpGrads {
    std::vector<DenseMatrix> weights;
    std::vector<std::vector<double>> biases;
};

MlpGrads mlp_zero_grads(const Mlp& net);

/// Reverse-mode pass: accumulates parameter gradients for the batch and
/// returns the gradient with respect to the input batch.
DenseMatrix mlp_backward_batch(const Mlp& net, const MlpCache& cache,
                               const DenseMatrix& grad_output, MlpGrads& grads);

std::size_t parameter_count(const Mlp& net);
void pack_parameters(const Mlp& net, double* out);
void unpack_parameters(Mlp& net, const double* in);
void pack_gradients(const MlpGrads& grads, double* out);

/// Product of layer Frobenius norms; an upper bound on the network's
/// Lipschitz constant (tanh is 1-Lipschitz).
double mlp_lipschitz_bound(const Mlp& net);

}  // namespace quadrom
