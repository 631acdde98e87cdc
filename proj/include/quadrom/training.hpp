#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "quadrom/quadnet.hpp"

namespace quadrom {

struct TrainConfig {
    double learning_rate = 1e-3;
    double min_loss = 1e-2;
    std::size_t max_epochs = 20000;
    std::uint64_t seed = 0;  // weight-init provenance; recorded, not consumed here
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double lr_decay = 1.0;  // per-epoch multiplicative factor; 1 keeps lr constant

    void validate() const;
};

/// First/second-moment accumulators mirroring a flat parameter vector.
struct AdamState {
    std::vector<double> m, v;
    std::size_t step = 0;

    explicit AdamState(std::size_t n_params = 0) : m(n_params, 0.0), v(n_params, 0.0) {}
};

/// Standard Adam update with bias correction, in place on `params`.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

struct TrainResult {
    std::vector<double> loss_history;  // entry 0 is the loss at initialization
    double best_loss = 0.0;
    std::size_t best_epoch = 0;
    bool reached_min_loss = false;
};

/// Full-batch Adam on the relative loss. Stops at min_loss or max_epochs and
/// leaves the best-loss parameters seen in the model. Throws TrainingDiverged
/// (carrying the history) when the loss turns non-finite.
TrainResult train(QuadNetModel& model, const CorrectionTrainingSet& data,
                  const TrainConfig& config);
TrainResult train(QuadNetMuModel& model, const CorrectionTrainingSet& data,
                  const TrainConfig& config);

}  // namespace quadrom
