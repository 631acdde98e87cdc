#pragma once

#include <vector>

#include "quadrom/quadnet.hpp"

namespace quadrom::detail {

/// Normalized training inputs plus the precomputed loss weights; built once
/// per training run, reused every epoch.
struct PreparedBatch {
    const CorrectionTrainingSet* data = nullptr;
    DenseMatrix branch_in;  // n_pts x branch input size (normalized)
    DenseMatrix trunk_in;   // n_pts x d (normalized)
    DenseMatrix param_in;   // n_snap x d_mu (normalized; empty for QuadNet)
    std::vector<std::vector<double>> quad_coeffs;
    std::vector<double> inv_norm2;  // 0 marks excluded (degenerate) snapshots
    std::size_t n_included = 0;
};

PreparedBatch prepare_batch(const QuadNetModel& model, const CorrectionTrainingSet& data);
PreparedBatch prepare_batch(const QuadNetMuModel& model, const CorrectionTrainingSet& data);

/// Relative loss over the prepared batch; fills flat gradients (same layout
/// as get_parameters) when `gradients` is non-null. Scratch buffers inside
/// `work` are reused across epochs.
struct EngineWork;

class Engine {
public:
    Engine();
    ~Engine();
    double run(const QuadNetModel& model, const PreparedBatch& batch,
               std::vector<double>* gradients);
    double run(const QuadNetMuModel& model, const PreparedBatch& batch,
               std::vector<double>* gradients);

private:
    double run_fused_mu(const QuadNetMuModel& model, const PreparedBatch& batch,
                        std::vector<double>* gradients);

    EngineWork* work_;
};

}  // namespace quadrom::detail
