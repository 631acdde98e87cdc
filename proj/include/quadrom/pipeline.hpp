#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "quadrom/dataset.hpp"
#include "quadrom/metrics.hpp"
#include "quadrom/pod.hpp"
#include "quadrom/quadnet.hpp"
#include "quadrom/sampler.hpp"
#include "quadrom/training.hpp"

namespace quadrom {

/// How POD mode values are supplied at points that are not mesh nodes.
enum class ModeInterp { Nearest, InverseDistance };

ModeInterp mode_interp_from_string(const std::string& name);

/// Mode values (r * d_field per row) at arbitrary query points. Nearest-node
/// lookup or inverse-distance weighting over the 4 nearest mesh nodes;
/// queries that coincide with a node return its values exactly.
DenseMatrix interpolate_mode_values(const PodBasis& basis, const DenseMatrix& query_points,
                                    ModeInterp method);

struct PipelineConfig {
    std::filesystem::path manifest;
    std::size_t r = 3;
    RbfKernel kernel = RbfKernel::Linear;
    bool run_pod_rbf = true;
    bool run_quad_ls = true;
    bool run_quadnet = false;
    bool run_quadnet_mu = true;
    TrainConfig training;
    QuadNetArch arch;
    double train_fraction = 0.8;
    std::optional<double> partial_fraction;  // Boltzmann-sampled training nodes
    ModeInterp mode_interp = ModeInterp::InverseDistance;
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 0;
    std::vector<std::size_t> dump_test_indices;  // test snapshots to dump as fields
};

struct ModelOutcome {
    std::string model;
    bool failed = false;
    std::string failure_reason;
    ErrorReport train_report;
    ErrorReport test_report;
};

struct PipelineResult {
    std::vector<ModelOutcome> outcomes;
    std::filesystem::path out_dir;

    const ModelOutcome& outcome(const std::string& model) const;
};

/// Full comparison run: POD + RBF offline stage, selected correction models,
/// per-model error CSVs, summary CSVs and optional field dumps.
PipelineResult run_pipeline(const PipelineConfig& config);

struct PartialSweepRow {
    double fraction = 0.0;
    bool failed = false;
    ErrorReport test_report;
};

struct PartialSweepResult {
    std::vector<PartialSweepRow> rows;
    std::filesystem::path out_dir;
};

/// Trains QuadNet-mu on Boltzmann-sampled node subsets of the given sizes and
/// evaluates every model on the full mesh.
PartialSweepResult sweep_partial(const PipelineConfig& config,
                                 const std::vector<double>& fractions);

struct ScarceCell {
    std::size_t r = 0;
    std::size_t n_mu = 0;
    std::string status;  // "ok", "skipped" (r >= n_mu), or "failed"
    double e_r = 0.0;    // meaningful only when status == "ok"
};

struct ScarceSweepResult {
    std::vector<ScarceCell> cells;  // row-major over (r_list, n_mu_list)
    std::filesystem::path out_dir;
};

/// Improvement-ratio heatmap over reduced dimension and training-set size.
/// One fixed held-out test set is reused for every cell; cell training sets
/// are evenly spaced subsamples (in parameter order) of the training pool.
ScarceSweepResult sweep_scarce(const PipelineConfig& config,
                               const std::vector<std::size_t>& r_list,
                               const std::vector<std::size_t>& n_mu_list);

}  // namespace quadrom
