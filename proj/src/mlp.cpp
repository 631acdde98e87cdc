#include "quadrom/mlp.hpp"

#include <cmath>

#include "quadrom/errors.hpp"
#include "quadrom/rng.hpp"

namespace quadrom {

Mlp mlp_init(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed,
             Activation output_activation) {
    if (layer_sizes.size() < 2) throw InvalidInput("mlp_init: need at least two layers");
    for (std::size_t s : layer_sizes)
        if (s < 1) throw InvalidInput("mlp_init: layer sizes must be >= 1");

    Mlp net;
    net.layer_sizes = layer_sizes;
    net.output_activation = output_activation;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        DenseMatrix w(fan_in, fan_out);
        for (std::size_t k = 0; k < fan_in; ++k)
            for (std::size_t j = 0; j < fan_out; ++j) w(k, j) = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

namespace {

void apply_layer(const DenseMatrix& x, const DenseMatrix& w,
                 const std::vector<double>& b, bool tanh_act, DenseMatrix& out) {
    const std::size_t n = x.rows(), in = w.rows(), m = w.cols();
    out.reshape(n, m);
    const double* __restrict wp = w.data();
    const double* __restrict bp = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        double* __restrict oi = out.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) oi[j] = bp[j];
        const double* __restrict xi = x.data() + i * in;
        for (std::size_t k = 0; k < in; ++k) {
            const double xik = xi[k];
            const double* __restrict wk = wp + k * m;
            for (std::size_t j = 0; j < m; ++j) oi[j] += xik * wk[j];
        }
        if (tanh_act)
            for (std::size_t j = 0; j < m; ++j) oi[j] = std::tanh(oi[j]);
    }
}

}  // namespace

const DenseMatrix& mlp_forward_batch(const Mlp& net, const DenseMatrix& input,
                                     MlpCache& cache) {
    if (input.cols() != net.input_size())
        throw InvalidInput("mlp_forward_batch: input width differs from first layer");
    cache.activations.resize(net.n_layers() + 1);
    cache.activations[0].reshape(input.rows(), input.cols());
    std::copy(input.data(), input.data() + input.size(), cache.activations[0].data());
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        const bool last = (l + 1 == net.n_layers());
        const bool tanh_act = last ? (net.output_activation == Activation::Tanh) : true;
        apply_layer(cache.activations[l], net.weights[l], net.biases[l], tanh_act,
                    cache.activations[l + 1]);
    }
    return cache.activations.back();
}

std::vector<double> mlp_forward(const Mlp& net, std::span<const double> input) {
    if (input.size() != net.input_size())
        throw InvalidInput("mlp_forward: input length differs from first layer");
    DenseMatrix x(1, input.size());
    std::copy(input.begin(), input.end(), x.data());
    MlpCache cache;
    const DenseMatrix& y = mlp_forward_batch(net, x, cache);
    return {y.data(), y.data() + y.cols()};
}

MlpGrads mlp_zero_grads(const Mlp& net) {
    MlpGrads g;
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        g.weights.emplace_back(net.weights[l].rows(), net.weights[l].cols());
        g.biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

DenseMatrix mlp_backward_batch(const Mlp& net, const MlpCache& cache,
                               const DenseMatrix& grad_output, MlpGrads& grads) {
    const std::size_t n = grad_output.rows();
    DenseMatrix delta = grad_output;  // gradient wrt post-activation values
    for (std::size_t l = net.n_layers(); l-- > 0;) {
        const DenseMatrix& act = cache.activations[l + 1];
        const DenseMatrix& prev = cache.activations[l];
        const bool last = (l + 1 == net.n_layers());
        const bool tanh_act = last ? (net.output_activation == Activation::Tanh) : true;
        const std::size_t m = net.weights[l].cols(), in = net.weights[l].rows();

        if (tanh_act) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    delta(i, j) *= 1.0 - act(i, j) * act(i, j);
        }

        DenseMatrix& dw = grads.weights[l];
        std::vector<double>& db = grads.biases[l];
        for (std::size_t i = 0; i < n; ++i) {
            const double* __restrict di = delta.data() + i * m;
            const double* __restrict pi = prev.data() + i * in;
            for (std::size_t j = 0; j < m; ++j) db[j] += di[j];
            for (std::size_t k = 0; k < in; ++k) {
                const double pik = pi[k];
                double* __restrict dwk = dw.data() + k * m;
                for (std::size_t j = 0; j < m; ++j) dwk[j] += pik * di[j];
            }
        }

        DenseMatrix dx(n, in);
        const DenseMatrix& w = net.weights[l];
        const double* __restrict wp = w.data();
        for (std::size_t i = 0; i < n; ++i) {
            const double* __restrict di = delta.data() + i * m;
            double* __restrict dxi = dx.data() + i * in;
            for (std::size_t k = 0; k < in; ++k) {
                const double* __restrict wk = wp + k * m;
                double acc = 0.0;
                for (std::size_t j = 0; j < m; ++j) acc += di[j] * wk[j];
                dxi[k] = acc;
            }
        }
        delta = std::move(dx);
    }
    return delta;
}

std::size_t parameter_count(const Mlp& net) {
    std::size_t count = 0;
    for (std::size_t l = 0; l < net.n_layers(); ++l)
        count += net.weights[l].size() + net.biases[l].size();
    return count;
}

void pack_parameters(const Mlp& net, double* out) {
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        const auto& e = net.weights[l].entries();
        out = std::copy(e.begin(), e.end(), out);
        out = std::copy(net.biases[l].begin(), net.biases[l].end(), out);
    }
}

void unpack_parameters(Mlp& net, const double* in) {
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        std::copy(in, in + net.weights[l].size(), net.weights[l].data());
        in += net.weights[l].size();
        std::copy(in, in + net.biases[l].size(), net.biases[l].begin());
        in += net.biases[l].size();
    }
}

void pack_gradients(const MlpGrads& grads, double* out) {
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
        const auto& e = grads.weights[l].entries();
        out = std::copy(e.begin(), e.end(), out);
        out = std::copy(grads.biases[l].begin(), grads.biases[l].end(), out);
    }
}

double mlp_lipschitz_bound(const Mlp& net) {
    double bound = 1.0;
    for (const auto& w : net.weights) bound *= frobenius_norm(w);
    return bound;
}

}  // namespace quadrom
