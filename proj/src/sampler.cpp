#include "quadrom/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "quadrom/errors.hpp"
#include "quadrom/rng.hpp"

namespace quadrom {

namespace {

std::vector<double> mean_correction_magnitudes(
    const std::vector<std::vector<double>>& corrections, std::size_t d_field) {
    if (corrections.empty()) throw InvalidInput("node_probabilities: no snapshots");
    if (d_field == 0) throw InvalidInput("node_probabilities: d_field must be >= 1");
    const std::size_t len = corrections[0].size();
    if (len == 0 || len % d_field != 0)
        throw InvalidInput("node_probabilities: field length not divisible by d_field");
    const std::size_t n_nodes = len / d_field;

    std::vector<double> c(n_nodes, 0.0);
    for (const auto& tau : corrections) {
        if (tau.size() != len)
            throw InvalidInput("node_probabilities: correction lengths disagree");
        for (std::size_t i = 0; i < n_nodes; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < d_field; ++k) {
                const double v = tau[i * d_field + k];
                s += v * v;
            }
            c[i] += std::sqrt(s);
        }
    }
    const double inv = 1.0 / static_cast<double>(corrections.size());
    for (double& v : c) v *= inv;
    return c;
}

}  // namespace

double default_epsilon(const std::vector<std::vector<double>>& corrections,
                       std::size_t d_field) {
    const auto c = mean_correction_magnitudes(corrections, d_field);
    const double cmax = *std::max_element(c.begin(), c.end());
    return cmax > 0.0 ? 1e-6 * cmax : 1.0;
}

NodeDistribution node_probabilities(const std::vector<std::vector<double>>& corrections,
                                    double epsilon, std::size_t d_field,
                                    CorrectionNormalizer norm) {
    if (!(epsilon > 0.0)) throw InvalidInput("node_probabilities: epsilon must be > 0");

    NodeDistribution dist;
    dist.epsilon = epsilon;
    dist.mean_corrections = mean_correction_magnitudes(corrections, d_field);
    const std::size_t n = dist.mean_corrections.size();

    double c_bar = 0.0;
    if (norm == CorrectionNormalizer::MeanCorrection) {
        for (double v : dist.mean_corrections) c_bar += v;
        c_bar /= static_cast<double>(n);
    } else {
        c_bar = *std::max_element(dist.mean_corrections.begin(),
                                  dist.mean_corrections.end());
    }
    dist.normalizer = c_bar;

    dist.probabilities.assign(n, 0.0);
    if (c_bar == 0.0) {
        // All corrections vanish: nothing to prefer, fall back to uniform.
        std::fill(dist.probabilities.begin(), dist.probabilities.end(),
                  1.0 / static_cast<double>(n));
        return dist;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dist.probabilities[i] = std::exp(-c_bar / (dist.mean_corrections[i] + epsilon));
        total += dist.probabilities[i];
    }
    for (double& p : dist.probabilities) p /= total;
    return dist;
}

std::vector<std::size_t> sample_nodes(const NodeDistribution& dist, double fraction,
                                      std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw InvalidInput("sample_nodes: fraction must lie in (0, 1]");
    const std::size_t n = dist.probabilities.size();
    if (n == 0) throw InvalidInput("sample_nodes: empty distribution");
    const std::size_t count = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));

    std::vector<double> weight = dist.probabilities;
    double total = 0.0;
    for (double w : weight) total += w;

    Rng rng = Rng::derive(seed, 0xb017ULL);
    std::vector<std::size_t> chosen;
    chosen.reserve(count);
    std::vector<bool> taken(n, false);
    for (std::size_t k = 0; k < count; ++k) {
        std::size_t pick = n;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                acc += weight[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        }
        if (pick == n) {
            // Residual probability mass exhausted (zero-weight nodes remain):
            // take the first unchosen index deterministically.
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && weight[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (!taken[i]) {
                        pick = i;
                        break;
                    }
                }
            }
        }
        taken[pick] = true;
        total -= weight[pick];
        chosen.push_back(pick);
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

}  // namespace quadrom
