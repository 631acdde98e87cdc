/// quadrom command-line front end: dataset generation, POD/RBF baselines,
/// quadratic-correction model training, prediction, and the comparison and
/// data-scarcity studies. See README.md for worked examples.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "quadrom/checkpoint.hpp"
#include "quadrom/dataset.hpp"
#include "quadrom/errors.hpp"
#include "quadrom/pipeline.hpp"
#include "quadrom/quadls.hpp"
#include "quadrom/rng.hpp"

using namespace quadrom;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CommonOpts {
    std::string manifest;
    std::size_t r = 3;
    std::string kernel = "linear";
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_r = true) {
    cmd->add_option("--manifest", o.manifest, "Dataset manifest path")->required();
    if (needs_r) cmd->add_option("--r", o.r, "Reduced dimension");
    cmd->add_option("--kernel", o.kernel, "RBF kernel: linear | tps");
    cmd->add_option("--train-fraction", o.train_fraction, "Training split fraction");
    cmd->add_option("--seed", o.seed, "Base seed");
    cmd->add_option("--out-dir", o.out_dir, "Output directory");
}

struct TrainOpts {
    double lr = 1e-3;
    double min_loss = 1e-2;
    std::size_t max_epochs = 20000;
    double lr_decay = 1.0;
    std::size_t hidden_layers = 7;
    std::size_t hidden_width = 20;
    std::size_t latent = 0;
    std::string branch_input = "flatten";
    bool combiner_tanh = false;
};

void add_train(CLI::App* cmd, TrainOpts& t) {
    cmd->add_option("--lr", t.lr, "Adam learning rate");
    cmd->add_option("--min-loss", t.min_loss, "Stop when the loss reaches this value");
    cmd->add_option("--max-epochs", t.max_epochs, "Epoch cap");
    cmd->add_option("--lr-decay", t.lr_decay, "Per-epoch learning-rate factor");
    cmd->add_option("--hidden-layers", t.hidden_layers, "Hidden layers per sub-network");
    cmd->add_option("--hidden-width", t.hidden_width, "Hidden layer width");
    cmd->add_option("--latent", t.latent, "Latent dimension p (0: r(r+1)/2)");
    cmd->add_option("--branch-input", t.branch_input, "flatten | magnitude");
    cmd->add_flag("--combiner-tanh", t.combiner_tanh, "Tanh on the combiner output");
}

PipelineConfig to_config(const CommonOpts& o, const TrainOpts& t) {
    PipelineConfig cfg;
    cfg.manifest = o.manifest;
    cfg.r = o.r;
    cfg.kernel = rbf_kernel_from_string(o.kernel);
    cfg.train_fraction = o.train_fraction;
    cfg.seed = o.seed;
    cfg.out_dir = o.out_dir;
    cfg.training.learning_rate = t.lr;
    cfg.training.min_loss = t.min_loss;
    cfg.training.max_epochs = t.max_epochs;
    cfg.training.lr_decay = t.lr_decay;
    cfg.arch.hidden_layers = t.hidden_layers;
    cfg.arch.hidden_width = t.hidden_width;
    cfg.arch.latent_dim = t.latent;
    cfg.arch.branch_input = t.branch_input == "magnitude" ? BranchInput::ModeMagnitude
                                                          : BranchInput::FlattenComponents;
    cfg.arch.combiner_output_tanh = t.combiner_tanh;
    return cfg;
}

// Offline artifacts rebuilt deterministically from the dataset and seed.
struct Offline {
    SnapshotSet train, test;
    PodBasis basis;
    RbfInterpolant interp;
};

Offline build_offline(const CommonOpts& o) {
    const SnapshotSet set = load_dataset(o.manifest);
    auto [train, test] = split(set, o.train_fraction, o.seed);
    Offline off;
    off.basis = compute_pod(train, o.r);
    DenseMatrix coeffs(train.n_mu(), o.r);
    for (std::size_t j = 0; j < train.n_mu(); ++j) {
        const std::vector<double> a = project(off.basis, train.fields[j]);
        std::copy(a.begin(), a.end(), coeffs.data() + j * o.r);
    }
    off.interp = rbf_fit(train.params, coeffs, rbf_kernel_from_string(o.kernel));
    off.train = std::move(train);
    off.test = std::move(test);
    return off;
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t next = csv.find(',', pos);
        if (next == std::string::npos) next = csv.size();
        out.push_back(std::stod(csv.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& csv) {
    std::vector<std::size_t> out;
    for (double v : parse_doubles(csv)) out.push_back(static_cast<std::size_t>(v));
    return out;
}

int cmd_generate(const std::string& kind, std::size_t nx, std::size_t ny, std::size_t modes,
                 std::size_t r_lin, double mu_lo, double mu_hi, std::size_t n_mu,
                 std::size_t d_field, std::uint64_t seed, const std::string& name,
                 const std::string& out_dir) {
    SyntheticSpec spec;
    spec.kind = synthetic_kind_from_string(kind);
    spec.nx = nx;
    spec.ny = ny;
    spec.n_modes = modes;
    spec.r_lin = r_lin;
    spec.mu_lo = mu_lo;
    spec.mu_hi = mu_hi;
    spec.n_mu = n_mu;
    spec.d_field = d_field;
    spec.seed = seed;
    spec.name = name;
    const fs::path manifest = save_dataset(generate_synthetic(spec), out_dir);
    std::cout << manifest.string() << "\n";
    return 0;
}

int cmd_pod(const CommonOpts& o) {
    const SnapshotSet set = load_dataset(o.manifest);
    const DenseMatrix s = assemble_snapshot_matrix(set);
    const ThinSvd svd = thin_svd(s);
    fs::create_directories(o.out_dir);

    std::ofstream sv(fs::path(o.out_dir) / "singular_values.csv");
    sv << "index,sigma\n";
    for (std::size_t i = 0; i < svd.singular_values.size(); ++i)
        sv << i << ',' << fmt(svd.singular_values[i]) << '\n';

    const PodBasis basis = compute_pod(s, o.r, set.points, set.d_field);
    save_matrix(basis.modes, fs::path(o.out_dir) / "pod_modes.qmat");

    double total = 0.0, kept = 0.0;
    for (std::size_t i = 0; i < svd.singular_values.size(); ++i) {
        const double e = svd.singular_values[i] * svd.singular_values[i];
        total += e;
        if (i < o.r) kept += e;
    }
    std::cout << "modes " << o.r << " retained_energy " << fmt(kept / total) << "\n";
    return 0;
}

int cmd_fit_ls(const CommonOpts& o) {
    const Offline off = build_offline(o);
    const CorrectionTrainingSet data = make_training_set(off.basis, off.train);
    const QuadOperatorLS op = fit_quad_ls(data.corrections, data.reduced_coeffs);
    fs::create_directories(o.out_dir);
    save_matrix(op.matrix, fs::path(o.out_dir) / "quad_ls_operator.qmat");

    std::vector<std::vector<double>> fitted;
    fitted.reserve(data.n_snap());
    for (const auto& a : data.reduced_coeffs) fitted.push_back(eval_correction_ls(op, a));
    std::cout << "training_correction_loss " << fmt(relative_loss(fitted, data.corrections))
              << "\n";
    return 0;
}

int cmd_train(bool with_mu, const CommonOpts& o, const TrainOpts& t, double fraction) {
    const PipelineConfig cfg = to_config(o, t);
    const Offline off = build_offline(o);
    CorrectionTrainingSet data = make_training_set(off.basis, off.train);
    if (fraction < 1.0) {
        const NodeDistribution dist = node_probabilities(
            data.corrections, default_epsilon(data.corrections, data.d_field), data.d_field);
        const std::vector<std::size_t> nodes =
            sample_nodes(dist, fraction, Rng::mix(o.seed, 0x6e6f6465));
        data = make_training_set(off.basis, off.train, nodes);
    }
    fs::create_directories(o.out_dir);

    TrainConfig tc = cfg.training;
    TrainResult result;
    fs::path ckpt;
    if (with_mu) {
        tc.seed = Rng::mix(o.seed, 0x716e6d75);
        QuadNetMuModel model = make_quadnet_mu(data, cfg.arch, tc.seed);
        result = train(model, data, tc);
        ckpt = fs::path(o.out_dir) / "quadnet-mu.ckpt";
        save_checkpoint(model, ckpt);
    } else {
        tc.seed = Rng::mix(o.seed, 0x716e6574);
        QuadNetModel model = make_quadnet(data, cfg.arch, tc.seed);
        result = train(model, data, tc);
        ckpt = fs::path(o.out_dir) / "quadnet.ckpt";
        save_checkpoint(model, ckpt);
    }

    std::ofstream loss(fs::path(o.out_dir) / (with_mu ? "loss_quadnet-mu.csv"
                                                      : "loss_quadnet.csv"));
    loss << "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_history.size(); ++e)
        loss << e << ',' << fmt(result.loss_history[e]) << '\n';

    std::cout << "checkpoint " << ckpt.string() << "\nepochs "
              << result.loss_history.size() - 1 << "\nbest_loss " << fmt(result.best_loss)
              << "\nreached_min_loss " << (result.reached_min_loss ? 1 : 0) << "\n";
    return 0;
}

int cmd_predict(const CommonOpts& o, const std::string& checkpoint,
                const std::string& ls_operator, const std::string& mu_csv,
                const std::string& points_file, const std::string& mode_interp) {
    const Offline off = build_offline(o);
    const std::vector<double> mu = parse_doubles(mu_csv);
    if (mu.size() != off.train.d_mu()) throw InvalidInput("predict: wrong --mu dimension");

    // Evaluation points: the mesh by default, or a CSV of coordinates.
    DenseMatrix points = off.train.points;
    bool off_mesh = false;
    if (!points_file.empty()) {
        std::ifstream in(points_file);
        if (!in) throw IoError("cannot open points file: " + points_file);
        std::vector<double> values;
        std::string line;
        while (std::getline(in, line)) {
            for (char& ch : line)
                if (ch == ',') ch = ' ';
            std::istringstream row(line);
            double v;
            while (row >> v) values.push_back(v);
        }
        const std::size_t d = off.train.d();
        points = DenseMatrix(values.size() / d, d);
        std::copy(values.begin(), values.end(), points.data());
        off_mesh = true;
    }

    const std::vector<double> a = rbf_eval(off.interp, mu);
    const DenseMatrix mode_values =
        off_mesh ? interpolate_mode_values(off.basis, points,
                                           mode_interp_from_string(mode_interp))
                 : [&] {
                       DenseMatrix mv(off.basis.n_dof(),
                                      off.basis.r() * off.basis.d_field);
                       for (std::size_t i = 0; i < off.basis.n_dof(); ++i) {
                           const std::vector<double> row = off.basis.mode_values_at(i);
                           std::copy(row.begin(), row.end(), mv.data() + i * row.size());
                       }
                       return mv;
                   }();

    // Linear part from the (possibly interpolated) mode values.
    const std::size_t df = off.basis.d_field;
    std::vector<double> linear(points.rows() * df, 0.0);
    for (std::size_t q = 0; q < points.rows(); ++q)
        for (std::size_t c = 0; c < df; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < off.basis.r(); ++k)
                acc += a[k] * mode_values(q, k * df + c);
            linear[q * df + c] = acc;
        }

    std::vector<double> correction(points.rows() * df, 0.0);
    std::string model_name = "pod-rbf";
    if (!checkpoint.empty()) {
        const auto loaded = load_checkpoint(checkpoint);
        if (std::holds_alternative<QuadNetMuModel>(loaded)) {
            correction = predict_correction(std::get<QuadNetMuModel>(loaded), mode_values,
                                            points, a, mu);
            model_name = "quadnet-mu";
        } else {
            correction =
                predict_correction(std::get<QuadNetModel>(loaded), mode_values, points, a);
            model_name = "quadnet";
        }
    } else if (!ls_operator.empty()) {
        if (off_mesh)
            throw InvalidInput("predict: quad-ls is mesh-bound; --points-file needs a "
                               "network checkpoint");
        QuadOperatorLS op;
        op.matrix = load_matrix(ls_operator);
        op.r = o.r;
        correction = eval_correction_ls(op, a);
        model_name = "quad-ls";
    }

    std::vector<double> corrected(linear.size());
    for (std::size_t i = 0; i < linear.size(); ++i) corrected[i] = linear[i] + correction[i];

    fs::create_directories(o.out_dir);
    auto dump = [&](const char* name, const std::vector<double>& field) {
        std::ofstream out(fs::path(o.out_dir) / name, std::ios::binary);
        for (double v : field) {
            const char* bytes = reinterpret_cast<const char*>(&v);
            out.write(bytes, 8);
        }
    };
    dump("linear.bin", linear);
    dump("correction.bin", correction);
    dump("corrected.bin", corrected);
    dump("coords.bin", std::vector<double>(points.data(), points.data() + points.size()));
    std::ofstream meta(fs::path(o.out_dir) / "dump.txt");
    meta << "model " << model_name << "\nn_dof " << points.rows() << "\nd " << points.cols()
         << "\nd_field " << df << "\nmu";
    for (double v : mu) meta << ' ' << fmt(v);
    meta << "\nfiles coords.bin linear.bin correction.bin corrected.bin\n";
    std::cout << (fs::path(o.out_dir) / "dump.txt").string() << "\n";
    return 0;
}

int cmd_sample_points(const CommonOpts& o, double fraction, double epsilon,
                      const std::string& normalizer, const std::string& out_file) {
    const Offline off = build_offline(o);
    const CorrectionTrainingSet data = make_training_set(off.basis, off.train);
    const double eps =
        epsilon > 0.0 ? epsilon : default_epsilon(data.corrections, data.d_field);
    const CorrectionNormalizer norm = normalizer == "max"
                                          ? CorrectionNormalizer::MaxCorrection
                                          : CorrectionNormalizer::MeanCorrection;
    const NodeDistribution dist =
        node_probabilities(data.corrections, eps, data.d_field, norm);
    const std::vector<std::size_t> nodes =
        sample_nodes(dist, fraction, Rng::mix(o.seed, 0x6e6f6465));

    std::ofstream out(out_file);
    if (!out) throw IoError("cannot open for writing: " + out_file);
    for (std::size_t idx : nodes) out << idx << '\n';
    std::cout << out_file << " " << nodes.size() << " nodes\n";
    return 0;
}

void print_summary(const PipelineResult& result) {
    for (const auto& oc : result.outcomes) {
        if (oc.failed) {
            std::cout << oc.model << " FAILED: " << oc.failure_reason << "\n";
        } else {
            std::cout << oc.model << " test mean " << fmt(oc.test_report.mean) << " std "
                      << fmt(oc.test_report.stddev) << " median "
                      << fmt(oc.test_report.median) << "\n";
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-intrusive ROMs with quadratic correction terms"};
    app.require_subcommand(1);

    // generate
    std::string g_kind = "generic-nonlinear", g_name = "synthetic", g_out = "dataset";
    std::size_t g_nx = 32, g_ny = 32, g_modes = 6, g_rlin = 3, g_nmu = 100, g_dfield = 1;
    double g_lo = 0.0, g_hi = 1.0;
    std::uint64_t g_seed = 0;
    CLI::App* generate = app.add_subcommand("generate", "Generate a synthetic dataset");
    generate->add_option("--kind", g_kind, "exact-quadratic | generic-nonlinear");
    generate->add_option("--nx", g_nx, "Grid points in x");
    generate->add_option("--ny", g_ny, "Grid points in y");
    generate->add_option("--modes", g_modes, "Number of latent spatial modes K");
    generate->add_option("--r-lin", g_rlin, "Linear-manifold dimension (exact-quadratic)");
    generate->add_option("--mu-lo", g_lo, "Parameter range lower bound");
    generate->add_option("--mu-hi", g_hi, "Parameter range upper bound");
    generate->add_option("--n-mu", g_nmu, "Number of snapshots");
    generate->add_option("--d-field", g_dfield, "Field components per point");
    generate->add_option("--seed", g_seed, "Generator seed");
    generate->add_option("--name", g_name, "Dataset name");
    generate->add_option("--out-dir", g_out, "Output directory");

    // pod
    CommonOpts pod_o;
    CLI::App* pod_cmd = app.add_subcommand("pod", "Singular values and POD modes");
    add_common(pod_cmd, pod_o);

    // fit-ls
    CommonOpts ls_o;
    CLI::App* ls_cmd = app.add_subcommand("fit-ls", "Fit the Quad-LS operator");
    add_common(ls_cmd, ls_o);

    // train-quadnet / train-quadnet-mu
    CommonOpts tq_o, tqm_o;
    TrainOpts tq_t, tqm_t;
    double tq_fraction = 1.0, tqm_fraction = 1.0;
    CLI::App* tq = app.add_subcommand("train-quadnet", "Train the QuadNet correction");
    add_common(tq, tq_o);
    add_train(tq, tq_t);
    tq->add_option("--fraction", tq_fraction, "Boltzmann-sampled node fraction");
    CLI::App* tqm = app.add_subcommand("train-quadnet-mu", "Train the QuadNet-mu correction");
    add_common(tqm, tqm_o);
    add_train(tqm, tqm_t);
    tqm->add_option("--fraction", tqm_fraction, "Boltzmann-sampled node fraction");

    // predict
    CommonOpts pr_o;
    std::string pr_ckpt, pr_ls, pr_mu, pr_points, pr_interp = "idw";
    CLI::App* pr = app.add_subcommand("predict", "Predict a field for a parameter");
    add_common(pr, pr_o);
    pr->add_option("--checkpoint", pr_ckpt, "Network checkpoint to apply");
    pr->add_option("--ls-operator", pr_ls, "Quad-LS operator matrix to apply");
    pr->add_option("--mu", pr_mu, "Parameter value(s), comma separated")->required();
    pr->add_option("--points-file", pr_points, "CSV coordinates for off-mesh queries");
    pr->add_option("--mode-interp", pr_interp, "nearest | idw");

    // pipeline
    CommonOpts pl_o;
    TrainOpts pl_t;
    std::string pl_models = "pod-rbf,quad-ls,quadnet-mu", pl_dump;
    double pl_fraction = 1.0;
    CLI::App* pl = app.add_subcommand("pipeline", "Train and compare the selected models");
    add_common(pl, pl_o);
    add_train(pl, pl_t);
    pl->add_option("--models", pl_models, "Comma list: pod-rbf,quad-ls,quadnet,quadnet-mu");
    pl->add_option("--fraction", pl_fraction, "Boltzmann-sampled node fraction for networks");
    pl->add_option("--dump", pl_dump, "Comma list of test snapshot indices to dump");

    // sweep-partial
    CommonOpts sp_o;
    TrainOpts sp_t;
    std::string sp_fracs = "0.1,0.2,0.5";
    CLI::App* sp = app.add_subcommand("sweep-partial", "Partial-data study over node fractions");
    add_common(sp, sp_o);
    add_train(sp, sp_t);
    sp->add_option("--fractions", sp_fracs, "Comma list of node fractions");

    // sweep-scarce
    CommonOpts sc_o;
    TrainOpts sc_t;
    std::string sc_r = "3,5,7,9", sc_nmu = "10,20,30,40,50,100";
    CLI::App* sc = app.add_subcommand("sweep-scarce", "Scarce-data improvement heatmap");
    add_common(sc, sc_o, /*needs_r=*/false);
    add_train(sc, sc_t);
    sc->add_option("--r-list", sc_r, "Comma list of reduced dimensions");
    sc->add_option("--n-mu-list", sc_nmu, "Comma list of training-set sizes");

    // sample-points
    CommonOpts smp_o;
    double smp_fraction = 0.5, smp_eps = 0.0;
    std::string smp_norm = "mean", smp_out = "nodes.txt";
    CLI::App* smp = app.add_subcommand("sample-points", "Boltzmann collocation sampling");
    add_common(smp, smp_o);
    smp->add_option("--fraction", smp_fraction, "Node fraction to select");
    smp->add_option("--epsilon", smp_eps, "Guard constant (0: 1e-6 max mean correction)");
    smp->add_option("--normalizer", smp_norm, "mean | max");
    smp->add_option("--out", smp_out, "Output file, one node index per line");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed())
            return cmd_generate(g_kind, g_nx, g_ny, g_modes, g_rlin, g_lo, g_hi, g_nmu,
                                g_dfield, g_seed, g_name, g_out);
        if (pod_cmd->parsed()) return cmd_pod(pod_o);
        if (ls_cmd->parsed()) return cmd_fit_ls(ls_o);
        if (tq->parsed()) return cmd_train(false, tq_o, tq_t, tq_fraction);
        if (tqm->parsed()) return cmd_train(true, tqm_o, tqm_t, tqm_fraction);
        if (pr->parsed())
            return cmd_predict(pr_o, pr_ckpt, pr_ls, pr_mu, pr_points, pr_interp);
        if (pl->parsed()) {
            PipelineConfig cfg = to_config(pl_o, pl_t);
            cfg.run_pod_rbf = pl_models.find("pod-rbf") != std::string::npos;
            cfg.run_quad_ls = pl_models.find("quad-ls") != std::string::npos;
            cfg.run_quadnet_mu = pl_models.find("quadnet-mu") != std::string::npos;
            // "quadnet" also matches inside "quadnet-mu"; require a standalone token.
            cfg.run_quadnet = false;
            for (std::size_t pos = pl_models.find("quadnet"); pos != std::string::npos;
                 pos = pl_models.find("quadnet", pos + 1)) {
                const std::size_t end = pos + 7;
                if (end == pl_models.size() || pl_models[end] == ',') cfg.run_quadnet = true;
            }
            if (pl_fraction < 1.0) cfg.partial_fraction = pl_fraction;
            if (!pl_dump.empty())
                for (std::size_t idx : parse_sizes(pl_dump)) cfg.dump_test_indices.push_back(idx);
            print_summary(run_pipeline(cfg));
            return 0;
        }
        if (sp->parsed()) {
            const PipelineConfig cfg = to_config(sp_o, sp_t);
            const PartialSweepResult result = sweep_partial(cfg, parse_doubles(sp_fracs));
            for (const auto& row : result.rows)
                std::cout << "fraction " << fmt(row.fraction) << " mean "
                          << (row.failed ? "failed" : fmt(row.test_report.mean)) << "\n";
            return 0;
        }
        if (sc->parsed()) {
            const PipelineConfig cfg = to_config(sc_o, sc_t);
            const ScarceSweepResult result =
                sweep_scarce(cfg, parse_sizes(sc_r), parse_sizes(sc_nmu));
            for (const auto& cell : result.cells)
                std::cout << "r " << cell.r << " n_mu " << cell.n_mu << " " << cell.status
                          << " e_r " << fmt(cell.e_r) << "\n";
            return 0;
        }
        if (smp->parsed())
            return cmd_sample_points(smp_o, smp_fraction, smp_eps, smp_norm, smp_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
