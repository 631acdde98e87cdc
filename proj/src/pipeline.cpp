#include "quadrom/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>

#include "binary_io.hpp"
#include "quadrom/checkpoint.hpp"
#include "quadrom/errors.hpp"
#include "quadrom/quadls.hpp"
#include "quadrom/rng.hpp"

namespace quadrom {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTagNodes = 0x6e6f6465;      // partial-data node sampling
constexpr std::uint64_t kTagQuadNet = 0x716e6574;    // QuadNet weight init
constexpr std::uint64_t kTagQuadNetMu = 0x716e6d75;  // QuadNet-mu weight init
constexpr std::uint64_t kTagRetry = 0x72657472;      // extra seeds for sweep retries

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

std::string param_header(std::size_t d_mu) {
    std::string h;
    for (std::size_t k = 0; k < d_mu; ++k) h += "mu" + std::to_string(k) + ",";
    return h;
}

// Offline stage shared by every model: split, POD, coefficient map, and the
// full-mesh training corrections.
struct OfflineStage {
    SnapshotSet train, test;
    PodBasis basis;
    RbfInterpolant interp;
    CorrectionTrainingSet full_data;
};

OfflineStage build_offline(const SnapshotSet& set, std::size_t r, RbfKernel kernel,
                           double train_fraction, std::uint64_t seed) {
    OfflineStage stage;
    auto [train, test] = split(set, train_fraction, seed);
    stage.train = std::move(train);
    stage.test = std::move(test);
    stage.basis = compute_pod(stage.train, r);

    DenseMatrix coeffs(stage.train.n_mu(), r);
    for (std::size_t j = 0; j < stage.train.n_mu(); ++j) {
        const std::vector<double> a = project(stage.basis, stage.train.fields[j]);
        std::copy(a.begin(), a.end(), coeffs.data() + j * r);
    }
    stage.interp = rbf_fit(stage.train.params, coeffs, kernel);
    stage.full_data = make_training_set(stage.basis, stage.train);
    return stage;
}

using CorrectionFn =
    std::function<std::vector<double>(std::span<const double>, std::span<const double>)>;

struct DumpRequest {
    std::set<std::size_t> indices;
    fs::path dir;
    std::string model;
};

void dump_fields(const fs::path& dir, const std::string& model, std::size_t index,
                 const SnapshotSet& part, std::size_t j, std::span<const double> linear,
                 std::span<const double> correction, std::span<const double> corrected) {
    const fs::path d = dir / (model + "_test" + std::to_string(index));
    fs::create_directories(d);
    auto write_bin = [&](const char* name, std::span<const double> data) {
        std::ofstream out(d / name, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + (d / name).string());
        detail::write_doubles_le(out, data);
    };
    write_bin("coords.bin", part.points.entries());
    write_bin("exact.bin", part.fields[j]);
    write_bin("linear.bin", linear);
    write_bin("correction.bin", correction);
    write_bin("corrected.bin", corrected);
    std::ofstream meta = open_out(d / "dump.txt");
    meta << "model " << model << "\n"
         << "n_dof " << part.n_dof() << "\n"
         << "d " << part.d() << "\n"
         << "d_field " << part.d_field << "\n";
    meta << "mu";
    for (std::size_t k = 0; k < part.d_mu(); ++k) meta << ' ' << fmt(part.params(j, k));
    meta << "\nfiles coords.bin exact.bin linear.bin correction.bin corrected.bin\n";
}

// Corrected-ROM errors over one split. The corrected field is assembled as
// linear + correction in a single pass; dumps store exactly those buffers.
// Zero-norm reference snapshots are skipped; `included` (when given) records
// the snapshot index behind each error entry.
ErrorReport evaluate_split(const OfflineStage& stage, const SnapshotSet& part,
                           const CorrectionFn& correction, const DumpRequest* dumps,
                           std::vector<std::size_t>* included = nullptr) {
    std::vector<double> errors;
    errors.reserve(part.n_mu());
    for (std::size_t j = 0; j < part.n_mu(); ++j) {
        const std::vector<double> a = rbf_eval(stage.interp, part.params.row(j));
        const std::vector<double> linear = reconstruct(stage.basis, a);
        std::vector<double> tau;
        if (correction) tau = correction(a, part.params.row(j));
        else tau.assign(linear.size(), 0.0);
        std::vector<double> corrected(linear.size());
        for (std::size_t i = 0; i < linear.size(); ++i) corrected[i] = linear[i] + tau[i];
        if (dumps && dumps->indices.count(j))
            dump_fields(dumps->dir, dumps->model, j, part, j, linear, tau, corrected);
        try {
            errors.push_back(relative_error(part.fields[j], corrected));
            if (included) included->push_back(j);
        } catch (const DegenerateReference&) {
            std::cerr << "pipeline: skipping zero-norm snapshot in error report\n";
        }
    }
    return error_stats(std::move(errors));
}

void write_errors_csv(const fs::path& path, const SnapshotSet& part,
                      const ErrorReport& report, const std::vector<std::size_t>& included) {
    std::ofstream out = open_out(path);
    out << param_header(part.d_mu()) << "error\n";
    for (std::size_t row = 0; row < report.errors.size(); ++row) {
        const std::size_t j = included[row];
        for (std::size_t k = 0; k < part.d_mu(); ++k) out << fmt(part.params(j, k)) << ',';
        out << fmt(report.errors[row]) << '\n';
    }
}

void write_loss_csv(const fs::path& path, const TrainResult& result) {
    std::ofstream out = open_out(path);
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_history.size(); ++e)
        out << e << ',' << fmt(result.loss_history[e]) << '\n';
}

std::vector<std::size_t> partial_nodes(const OfflineStage& stage, double fraction,
                                       std::uint64_t seed) {
    const auto& corr = stage.full_data.corrections;
    const std::size_t df = stage.full_data.d_field;
    const NodeDistribution dist =
        node_probabilities(corr, default_epsilon(corr, df), df);
    return sample_nodes(dist, fraction, Rng::mix(seed, kTagNodes));
}

struct TrainedMu {
    QuadNetMuModel model;
    TrainResult result;
};

// Sweep cells retry divergence with up to two extra seeds before flagging.
std::optional<TrainedMu> train_mu_with_retries(const CorrectionTrainingSet& data,
                                               const QuadNetArch& arch, TrainConfig cfg,
                                               std::uint64_t model_seed) {
    for (std::uint64_t attempt = 0; attempt < 3; ++attempt) {
        const std::uint64_t s =
            attempt == 0 ? model_seed : Rng::mix(model_seed, kTagRetry + attempt);
        QuadNetMuModel model = make_quadnet_mu(data, arch, s);
        cfg.seed = s;
        try {
            TrainResult result = train(model, data, cfg);
            return TrainedMu{std::move(model), std::move(result)};
        } catch (const TrainingDiverged& e) {
            std::cerr << "sweep: training diverged (attempt " << attempt + 1
                      << "): " << e.what() << "\n";
        }
    }
    return std::nullopt;
}

}  // namespace

ModeInterp mode_interp_from_string(const std::string& name) {
    if (name == "nearest") return ModeInterp::Nearest;
    if (name == "idw") return ModeInterp::InverseDistance;
    throw InvalidInput("unknown mode interpolation: " + name);
}

DenseMatrix interpolate_mode_values(const PodBasis& basis, const DenseMatrix& query_points,
                                    ModeInterp method) {
    if (query_points.cols() != basis.points.cols())
        throw InvalidInput("interpolate_mode_values: coordinate dimension mismatch");
    const std::size_t width = basis.r() * basis.d_field;
    DenseMatrix out(query_points.rows(), width);

    const std::size_t n_neighbors = std::min<std::size_t>(4, basis.n_dof());
    std::vector<std::pair<double, std::size_t>> dist(basis.n_dof());
    for (std::size_t q = 0; q < query_points.rows(); ++q) {
        for (std::size_t i = 0; i < basis.n_dof(); ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < query_points.cols(); ++k) {
                const double d = query_points(q, k) - basis.points(i, k);
                s += d * d;
            }
            dist[i] = {s, i};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(n_neighbors),
                          dist.end());
        if (method == ModeInterp::Nearest || dist[0].first == 0.0) {
            const std::vector<double> mv = basis.mode_values_at(dist[0].second);
            std::copy(mv.begin(), mv.end(), out.data() + q * width);
            continue;
        }
        double wsum = 0.0;
        std::vector<double> acc(width, 0.0);
        for (std::size_t k = 0; k < n_neighbors; ++k) {
            const double w = 1.0 / std::sqrt(dist[k].first);
            const std::vector<double> mv = basis.mode_values_at(dist[k].second);
            for (std::size_t c = 0; c < width; ++c) acc[c] += w * mv[c];
            wsum += w;
        }
        for (std::size_t c = 0; c < width; ++c) out(q, c) = acc[c] / wsum;
    }
    return out;
}

const ModelOutcome& PipelineResult::outcome(const std::string& model) const {
    for (const auto& o : outcomes)
        if (o.model == model) return o;
    throw InvalidInput("no outcome for model: " + model);
}

PipelineResult run_pipeline(const PipelineConfig& config) {
    const SnapshotSet set = load_dataset(config.manifest);
    fs::create_directories(config.out_dir);

    OfflineStage stage = build_offline(set, config.r, config.kernel, config.train_fraction,
                                       config.seed);

    // Collocation nodes for the operator networks.
    CorrectionTrainingSet net_data;
    const CorrectionTrainingSet* net_data_ptr = &stage.full_data;
    if (config.partial_fraction) {
        const std::vector<std::size_t> nodes =
            partial_nodes(stage, *config.partial_fraction, config.seed);
        net_data = make_training_set(stage.basis, stage.train, nodes);
        net_data_ptr = &net_data;
    }

    PipelineResult result;
    result.out_dir = config.out_dir;

    DumpRequest dumps;
    dumps.indices.insert(config.dump_test_indices.begin(), config.dump_test_indices.end());
    dumps.dir = config.out_dir / "dumps";

    auto evaluate_model = [&](const std::string& name, const CorrectionFn& correction) {
        ModelOutcome outcome;
        outcome.model = name;
        DumpRequest model_dumps = dumps;
        model_dumps.model = name;
        const DumpRequest* dp = dumps.indices.empty() ? nullptr : &model_dumps;
        std::vector<std::size_t> train_idx, test_idx;
        outcome.train_report =
            evaluate_split(stage, stage.train, correction, nullptr, &train_idx);
        outcome.test_report = evaluate_split(stage, stage.test, correction, dp, &test_idx);
        write_errors_csv(config.out_dir / ("errors_" + name + "_train.csv"), stage.train,
                         outcome.train_report, train_idx);
        write_errors_csv(config.out_dir / ("errors_" + name + "_test.csv"), stage.test,
                         outcome.test_report, test_idx);
        return outcome;
    };

    if (config.run_pod_rbf)
        result.outcomes.push_back(evaluate_model("pod-rbf", nullptr));

    if (config.run_quad_ls) {
        QuadOperatorLS op =
            fit_quad_ls(stage.full_data.corrections, stage.full_data.reduced_coeffs);
        save_matrix(op.matrix, config.out_dir / "quad_ls_operator.qmat");
        result.outcomes.push_back(evaluate_model(
            "quad-ls", [&](std::span<const double> a, std::span<const double>) {
                return eval_correction_ls(op, a);
            }));
    }

    if (config.run_quadnet) {
        ModelOutcome outcome;
        outcome.model = "quadnet";
        try {
            QuadNetModel model =
                make_quadnet(*net_data_ptr, config.arch, Rng::mix(config.seed, kTagQuadNet));
            TrainConfig cfg = config.training;
            cfg.seed = Rng::mix(config.seed, kTagQuadNet);
            const TrainResult tr = train(model, *net_data_ptr, cfg);
            write_loss_csv(config.out_dir / "loss_quadnet.csv", tr);
            save_checkpoint(model, config.out_dir / "quadnet.ckpt");
            outcome = evaluate_model(
                "quadnet", [&](std::span<const double> a, std::span<const double>) {
                    return predict_correction(model, stage.basis, a);
                });
        } catch (const TrainingDiverged& e) {
            outcome.failed = true;
            outcome.failure_reason = e.what();
            std::cerr << "pipeline: quadnet failed: " << e.what() << "\n";
        }
        result.outcomes.push_back(std::move(outcome));
    }

    if (config.run_quadnet_mu) {
        ModelOutcome outcome;
        outcome.model = "quadnet-mu";
        try {
            QuadNetMuModel model = make_quadnet_mu(*net_data_ptr, config.arch,
                                                   Rng::mix(config.seed, kTagQuadNetMu));
            TrainConfig cfg = config.training;
            cfg.seed = Rng::mix(config.seed, kTagQuadNetMu);
            const TrainResult tr = train(model, *net_data_ptr, cfg);
            write_loss_csv(config.out_dir / "loss_quadnet-mu.csv", tr);
            save_checkpoint(model, config.out_dir / "quadnet-mu.ckpt");
            outcome = evaluate_model(
                "quadnet-mu", [&](std::span<const double> a, std::span<const double> mu) {
                    return predict_correction(model, stage.basis, a, mu);
                });
        } catch (const TrainingDiverged& e) {
            outcome.failed = true;
            outcome.failure_reason = e.what();
            std::cerr << "pipeline: quadnet-mu failed: " << e.what() << "\n";
        }
        result.outcomes.push_back(std::move(outcome));
    }

    auto write_summary = [&](const fs::path& path, bool train_split) {
        std::ofstream out = open_out(path);
        out << "model,mean,std,median\n";
        for (const auto& o : result.outcomes) {
            const ErrorReport& r = train_split ? o.train_report : o.test_report;
            if (o.failed) {
                out << o.model << ",nan,nan,nan\n";
            } else {
                out << o.model << ',' << fmt(r.mean) << ',' << fmt(r.stddev) << ','
                    << fmt(r.median) << '\n';
            }
        }
    };
    write_summary(config.out_dir / "summary.csv", false);
    write_summary(config.out_dir / "summary_train.csv", true);
    return result;
}

PartialSweepResult sweep_partial(const PipelineConfig& config,
                                 const std::vector<double>& fractions) {
    for (double f : fractions)
        if (!(f > 0.0 && f <= 1.0))
            throw InvalidInput("sweep_partial: fractions must lie in (0, 1]");

    const SnapshotSet set = load_dataset(config.manifest);
    fs::create_directories(config.out_dir);
    OfflineStage stage = build_offline(set, config.r, config.kernel, config.train_fraction,
                                       config.seed);

    PartialSweepResult result;
    result.out_dir = config.out_dir;

    std::ofstream summary = open_out(config.out_dir / "partial_summary.csv");
    summary << "fraction,mean,std,median\n";
    std::ofstream per_snapshot = open_out(config.out_dir / "partial_errors.csv");
    per_snapshot << "fraction," << param_header(stage.test.d_mu()) << "error\n";

    for (double fraction : fractions) {
        const std::vector<std::size_t> nodes = partial_nodes(stage, fraction, config.seed);
        const CorrectionTrainingSet data =
            make_training_set(stage.basis, stage.train, nodes);

        PartialSweepRow row;
        row.fraction = fraction;
        auto trained = train_mu_with_retries(data, config.arch, config.training,
                                             Rng::mix(config.seed, kTagQuadNetMu));
        if (!trained) {
            row.failed = true;
            summary << fmt(fraction) << ",nan,nan,nan\n";
        } else {
            std::vector<std::size_t> included;
            row.test_report = evaluate_split(
                stage, stage.test,
                [&](std::span<const double> a, std::span<const double> mu) {
                    return predict_correction(trained->model, stage.basis, a, mu);
                },
                nullptr, &included);
            summary << fmt(fraction) << ',' << fmt(row.test_report.mean) << ','
                    << fmt(row.test_report.stddev) << ',' << fmt(row.test_report.median)
                    << '\n';
            for (std::size_t j = 0; j < row.test_report.errors.size(); ++j) {
                per_snapshot << fmt(fraction) << ',';
                for (std::size_t k = 0; k < stage.test.d_mu(); ++k)
                    per_snapshot << fmt(stage.test.params(included[j], k)) << ',';
                per_snapshot << fmt(row.test_report.errors[j]) << '\n';
            }
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

ScarceSweepResult sweep_scarce(const PipelineConfig& config,
                               const std::vector<std::size_t>& r_list,
                               const std::vector<std::size_t>& n_mu_list) {
    if (r_list.empty() || n_mu_list.empty())
        throw InvalidInput("sweep_scarce: empty sweep lists");
    const SnapshotSet set = load_dataset(config.manifest);
    fs::create_directories(config.out_dir);

    // One fixed held-out test set reused for every cell.
    auto [pool, test] = split(set, config.train_fraction, config.seed);
    for (std::size_t n_mu : n_mu_list)
        if (n_mu > pool.n_mu())
            throw InvalidInput("sweep_scarce: n_mu exceeds available training snapshots");

    // Pool order sorted by parameter so subsamples cover the range.
    std::vector<std::size_t> order(pool.n_mu());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return pool.params.row(a)[0] < pool.params.row(b)[0];
    });

    ScarceSweepResult result;
    result.out_dir = config.out_dir;

    std::ofstream status = open_out(config.out_dir / "scarce_status.csv");
    status << "r,n_mu,status,e_r\n";

    for (std::size_t r : r_list) {
        for (std::size_t n_mu : n_mu_list) {
            ScarceCell cell;
            cell.r = r;
            cell.n_mu = n_mu;
            if (r >= n_mu) {
                cell.status = "skipped";
                cell.e_r = std::nan("");
                status << r << ',' << n_mu << ",skipped,nan\n";
                result.cells.push_back(cell);
                continue;
            }

            // Evenly spaced subsample of the pool in parameter order.
            std::vector<std::size_t> chosen;
            chosen.reserve(n_mu);
            if (n_mu == 1) {
                chosen.push_back(order[0]);
            } else {
                for (std::size_t i = 0; i < n_mu; ++i) {
                    const std::size_t pos =
                        (i * (pool.n_mu() - 1)) / (n_mu - 1);
                    chosen.push_back(order[pos]);
                }
            }
            std::sort(chosen.begin(), chosen.end());

            SnapshotSet cell_train;
            cell_train.name = pool.name;
            cell_train.d_field = pool.d_field;
            cell_train.generator = pool.generator;
            cell_train.gen_seed = pool.gen_seed;
            cell_train.points = pool.points;
            cell_train.params = DenseMatrix(n_mu, pool.d_mu());
            for (std::size_t i = 0; i < n_mu; ++i) {
                for (std::size_t k = 0; k < pool.d_mu(); ++k)
                    cell_train.params(i, k) = pool.params(chosen[i], k);
                cell_train.fields.push_back(pool.fields[chosen[i]]);
            }

            try {
                PodBasis basis = compute_pod(cell_train, r);
                DenseMatrix coeffs(cell_train.n_mu(), r);
                for (std::size_t j = 0; j < cell_train.n_mu(); ++j) {
                    const std::vector<double> a = project(basis, cell_train.fields[j]);
                    std::copy(a.begin(), a.end(), coeffs.data() + j * r);
                }
                RbfInterpolant interp = rbf_fit(cell_train.params, coeffs, config.kernel);
                CorrectionTrainingSet data = make_training_set(basis, cell_train);

                OfflineStage cell_stage;
                cell_stage.train = std::move(cell_train);
                cell_stage.test = test;
                cell_stage.basis = std::move(basis);
                cell_stage.interp = std::move(interp);

                const ErrorReport base =
                    evaluate_split(cell_stage, cell_stage.test, nullptr, nullptr);

                auto trained =
                    train_mu_with_retries(data, config.arch, config.training,
                                          Rng::mix(config.seed, kTagQuadNetMu));
                if (!trained) {
                    cell.status = "failed";
                    cell.e_r = std::nan("");
                    status << r << ',' << n_mu << ",failed,nan\n";
                } else {
                    const ErrorReport corrected = evaluate_split(
                        cell_stage, cell_stage.test,
                        [&](std::span<const double> a, std::span<const double> mu) {
                            return predict_correction(trained->model, cell_stage.basis, a,
                                                      mu);
                        },
                        nullptr);
                    cell.status = "ok";
                    cell.e_r = improvement_ratio(base.mean, corrected.mean);
                    status << r << ',' << n_mu << ",ok," << fmt(cell.e_r) << '\n';
                }
            } catch (const std::exception& e) {
                cell.status = "failed";
                cell.e_r = std::nan("");
                status << r << ',' << n_mu << ",failed,nan\n";
                std::cerr << "sweep_scarce cell (r=" << r << ", n_mu=" << n_mu
                          << ") failed: " << e.what() << "\n";
            }
            result.cells.push_back(cell);
        }
    }

    std::ofstream heat = open_out(config.out_dir / "scarce_er.csv");
    heat << "r";
    for (std::size_t n_mu : n_mu_list) heat << ",n_mu_" << n_mu;
    heat << '\n';
    std::size_t cell_index = 0;
    for (std::size_t ri = 0; ri < r_list.size(); ++ri) {
        heat << r_list[ri];
        for (std::size_t ci = 0; ci < n_mu_list.size(); ++ci) {
            const ScarceCell& cell = result.cells[cell_index++];
            heat << ',' << (cell.status == "ok" ? fmt(cell.e_r) : cell.status);
        }
        heat << '\n';
    }
    return result;
}

}  // namespace quadrom
