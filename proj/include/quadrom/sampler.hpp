#pragma once

#include <cstdint>
#include <vector>

#include "quadrom/linalg.hpp"

namespace quadrom {

enum class CorrectionNormalizer { MeanCorrection, MaxCorrection };

/// Boltzmann-like node-selection distribution p_i ~ exp(-C_bar / (C_i + eps)),
/// concentrating collocation points where corrections are large.
struct NodeDistribution {
    std::vector<double> probabilities;    // sum to 1
    std::vector<double> mean_corrections; // C_i
    double normalizer = 0.0;              // C_bar
    double epsilon = 0.0;
};

/// Per-node mean correction magnitude over snapshots (Euclidean norm across
/// field components), turned into selection probabilities. When every C_i is
/// zero the distribution falls back to uniform.
NodeDistribution node_probabilities(const std::vector<std::vector<double>>& corrections,
                                    double epsilon, std::size_t d_field = 1,
                                    CorrectionNormalizer norm = CorrectionNormalizer::MeanCorrection);

/// Default guard constant: 1e-6 times the largest mean correction (1 when all
/// corrections vanish).
double default_epsilon(const std::vector<std::vector<double>>& corrections,
                       std::size_t d_field = 1);

/// ceil(fraction * n) distinct node indices, drawn without replacement by
/// sequential draw-and-renormalize; deterministic given the seed. Returned
/// sorted ascending.
std::vector<std::size_t> sample_nodes(const NodeDistribution& dist, double fraction,
                                      std::uint64_t seed);

}  // namespace quadrom
