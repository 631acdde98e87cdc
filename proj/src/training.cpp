#include "quadrom/training.hpp"

#include <cmath>

#include "quadnet_internal.hpp"
#include "quadrom/errors.hpp"

namespace quadrom {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw InvalidInput("TrainConfig: learning_rate must be > 0");
    if (max_epochs < 1) throw InvalidInput("TrainConfig: max_epochs must be >= 1");
    if (!(lr_decay > 0.0)) throw InvalidInput("TrainConfig: lr_decay must be > 0");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, double beta1, double beta2, double epsilon) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size())
        throw InvalidInput("adam_step: shape mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon);
    }
}

namespace {

template <typename Model>
TrainResult train_impl(Model& model, const CorrectionTrainingSet& data,
                       const TrainConfig& config) {
    config.validate();
    detail::PreparedBatch batch = detail::prepare_batch(model, data);
    detail::Engine engine;

    const std::size_t n = parameter_count(model);
    std::vector<double> params(n), grads;
    get_parameters(model, params);
    AdamState state(n);

    TrainResult result;
    double loss = engine.run(model, batch, &grads);
    if (!std::isfinite(loss))
        throw TrainingDiverged("training: non-finite loss at initialization", {loss});
    result.loss_history.push_back(loss);
    result.best_loss = loss;
    result.best_epoch = 0;
    std::vector<double> best_params = params;

    if (loss > config.min_loss) {
        double lr = config.learning_rate;
        for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
            adam_step(params, grads, state, lr, config.beta1, config.beta2, config.epsilon);
            lr *= config.lr_decay;
            set_parameters(model, params);
            loss = engine.run(model, batch, &grads);
            if (!std::isfinite(loss)) {
                set_parameters(model, best_params);
                throw TrainingDiverged("training: non-finite loss at epoch " +
                                           std::to_string(epoch),
                                       std::move(result.loss_history));
            }
            result.loss_history.push_back(loss);
            if (loss < result.best_loss) {
                result.best_loss = loss;
                result.best_epoch = epoch;
                best_params = params;
            }
            if (loss <= config.min_loss) break;
        }
    }

    result.reached_min_loss = result.best_loss <= config.min_loss;
    set_parameters(model, best_params);
    return result;
}

}  // namespace

TrainResult train(QuadNetModel& model, const CorrectionTrainingSet& data,
                  const TrainConfig& config) {
    return train_impl(model, data, config);
}

TrainResult train(QuadNetMuModel& model, const CorrectionTrainingSet& data,
                  const TrainConfig& config) {
    return train_impl(model, data, config);
}

}  // namespace quadrom
