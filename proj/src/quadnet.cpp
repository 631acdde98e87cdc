#include "quadrom/quadnet.hpp"

#include <cmath>
#include <iostream>

#include "quadnet_internal.hpp"
#include "quadrom/errors.hpp"
#include "quadrom/rng.hpp"

namespace quadrom {

void Normalizer::apply(std::span<const double> in, std::span<double> out) const {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - offset[i]) * scale[i];
}

namespace {

constexpr double kDegenerateNorm2 = 1e-30;

Normalizer range_normalizer(const DenseMatrix& rows) {
    // Affine map onto [-1, 1] per column.
    Normalizer n;
    const std::size_t c = rows.cols();
    n.offset.assign(c, 0.0);
    n.scale.assign(c, 1.0);
    for (std::size_t j = 0; j < c; ++j) {
        double lo = rows(0, j), hi = rows(0, j);
        for (std::size_t i = 1; i < rows.rows(); ++i) {
            lo = std::min(lo, rows(i, j));
            hi = std::max(hi, rows(i, j));
        }
        n.offset[j] = 0.5 * (lo + hi);
        n.scale[j] = hi > lo ? 2.0 / (hi - lo) : 1.0;
    }
    return n;
}

Normalizer maxabs_normalizer(const DenseMatrix& rows) {
    Normalizer n;
    const std::size_t c = rows.cols();
    n.offset.assign(c, 0.0);
    n.scale.assign(c, 1.0);
    for (std::size_t j = 0; j < c; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < rows.rows(); ++i) m = std::max(m, std::abs(rows(i, j)));
        n.scale[j] = m > 0.0 ? 1.0 / m : 1.0;
    }
    return n;
}

std::size_t branch_input_size(BranchInput kind, std::size_t r, std::size_t d_field) {
    return kind == BranchInput::FlattenComponents ? r * d_field : r;
}

// Reduces raw per-point mode values (r * d_field, mode-major) to the branch
// input layout, before normalization.
void reduce_mode_row(BranchInput kind, std::size_t r, std::size_t d_field,
                     std::span<const double> raw, std::span<double> out) {
    if (kind == BranchInput::FlattenComponents) {
        std::copy(raw.begin(), raw.end(), out.begin());
        return;
    }
    for (std::size_t k = 0; k < r; ++k) {
        double s = 0.0;
        for (std::size_t c = 0; c < d_field; ++c) {
            const double v = raw[k * d_field + c];
            s += v * v;
        }
        out[k] = std::sqrt(s);
    }
}

DenseMatrix build_branch_batch(BranchInput kind, std::size_t r, std::size_t d_field,
                               const Normalizer& norm, const DenseMatrix& mode_values) {
    if (mode_values.cols() != r * d_field)
        throw InvalidInput("mode values must carry r * d_field entries per point");
    const std::size_t n = mode_values.rows();
    const std::size_t bin = branch_input_size(kind, r, d_field);
    DenseMatrix out(n, bin);
    std::vector<double> reduced(bin);
    for (std::size_t i = 0; i < n; ++i) {
        reduce_mode_row(kind, r, d_field, mode_values.row(i), reduced);
        norm.apply(reduced, out.row(i));
    }
    return out;
}

DenseMatrix normalize_rows(const Normalizer& norm, const DenseMatrix& rows) {
    DenseMatrix out(rows.rows(), rows.cols());
    for (std::size_t i = 0; i < rows.rows(); ++i) norm.apply(rows.row(i), out.row(i));
    return out;
}

std::vector<std::size_t> layer_sizes(std::size_t in, const QuadNetArch& arch,
                                     std::size_t out) {
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), arch.hidden_layers, arch.hidden_width);
    sizes.push_back(out);
    return sizes;
}

void check_training_set(const CorrectionTrainingSet& data) {
    if (data.n_snap() == 0 || data.n_pts() == 0)
        throw InvalidInput("correction training set is empty");
    if (data.mode_values.rows() != data.n_pts() ||
        data.mode_values.cols() != data.r * data.d_field)
        throw InvalidInput("mode value matrix has wrong shape");
    for (const auto& a : data.reduced_coeffs)
        if (a.size() != data.r) throw InvalidInput("reduced coefficient length differs from r");
    for (const auto& t : data.corrections)
        if (t.size() != data.n_pts() * data.d_field)
            throw InvalidInput("correction length differs from n_pts * d_field");
    if (data.corrections.size() != data.n_snap())
        throw InvalidInput("correction count differs from snapshot count");
}

}  // namespace

CorrectionTrainingSet make_training_set(const PodBasis& basis, const SnapshotSet& snaps,
                                        std::span<const std::size_t> nodes) {
    snaps.validate();
    if (basis.d_field != snaps.d_field || basis.n_dof() != snaps.n_dof())
        throw InvalidInput("make_training_set: basis and snapshots disagree on mesh");
    const std::size_t df = basis.d_field;

    std::vector<std::size_t> all;
    if (nodes.empty()) {
        all.resize(basis.n_dof());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        nodes = all;
    }
    for (std::size_t node : nodes)
        if (node >= basis.n_dof())
            throw InvalidInput("make_training_set: node index out of range");

    CorrectionTrainingSet data;
    data.r = basis.r();
    data.d_field = df;
    data.params = snaps.params;

    data.coords = DenseMatrix(nodes.size(), snaps.d());
    data.mode_values = DenseMatrix(nodes.size(), basis.r() * df);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        for (std::size_t j = 0; j < snaps.d(); ++j)
            data.coords(i, j) = snaps.points(nodes[i], j);
        const std::vector<double> mv = basis.mode_values_at(nodes[i]);
        std::copy(mv.begin(), mv.end(), data.mode_values.data() + i * mv.size());
    }

    data.reduced_coeffs.reserve(snaps.n_mu());
    data.corrections.reserve(snaps.n_mu());
    for (std::size_t j = 0; j < snaps.n_mu(); ++j) {
        std::vector<double> a = project(basis, snaps.fields[j]);
        const std::vector<double> recon = reconstruct(basis, a);
        const std::vector<double> tau = exact_correction(snaps.fields[j], recon);
        std::vector<double> restricted(nodes.size() * df);
        for (std::size_t i = 0; i < nodes.size(); ++i)
            for (std::size_t c = 0; c < df; ++c)
                restricted[i * df + c] = tau[nodes[i] * df + c];
        data.reduced_coeffs.push_back(std::move(a));
        data.corrections.push_back(std::move(restricted));
    }
    return data;
}

QuadNetModel make_quadnet(const CorrectionTrainingSet& data, const QuadNetArch& arch,
                          std::uint64_t seed) {
    check_training_set(data);
    QuadNetModel m;
    m.r = data.r;
    m.d = data.coords.cols();
    m.d_field = data.d_field;
    m.branch_input = arch.branch_input;
    m.latent_dim = arch.latent_dim ? arch.latent_dim : quad_size(m.r);

    const std::size_t bin = branch_input_size(m.branch_input, m.r, m.d_field);
    DenseMatrix reduced(data.n_pts(), bin);
    std::vector<double> tmp(bin);
    for (std::size_t i = 0; i < data.n_pts(); ++i) {
        reduce_mode_row(m.branch_input, m.r, m.d_field, data.mode_values.row(i), tmp);
        std::copy(tmp.begin(), tmp.end(), reduced.data() + i * bin);
    }
    m.mode_norm = maxabs_normalizer(reduced);
    m.coord_norm = range_normalizer(data.coords);

    m.branch = mlp_init(layer_sizes(bin, arch, m.latent_dim), Rng::mix(seed, 1));
    m.trunk = mlp_init(layer_sizes(m.d, arch, m.latent_dim), Rng::mix(seed, 2));
    m.combiner = mlp_init({m.latent_dim, m.output_size()}, Rng::mix(seed, 3),
                          arch.combiner_output_tanh ? Activation::Tanh : Activation::Identity);
    return m;
}

QuadNetMuModel make_quadnet_mu(const CorrectionTrainingSet& data, const QuadNetArch& arch,
                               std::uint64_t seed) {
    check_training_set(data);
    QuadNetMuModel m;
    m.r = data.r;
    m.d = data.coords.cols();
    m.d_mu = data.params.cols();
    m.d_field = data.d_field;
    m.branch_input = arch.branch_input;
    m.latent_dim = arch.latent_dim ? arch.latent_dim : quad_size(m.r);

    const std::size_t bin = branch_input_size(m.branch_input, m.r, m.d_field);
    DenseMatrix reduced(data.n_pts(), bin);
    std::vector<double> tmp(bin);
    for (std::size_t i = 0; i < data.n_pts(); ++i) {
        reduce_mode_row(m.branch_input, m.r, m.d_field, data.mode_values.row(i), tmp);
        std::copy(tmp.begin(), tmp.end(), reduced.data() + i * bin);
    }
    m.mode_norm = maxabs_normalizer(reduced);
    m.coord_norm = range_normalizer(data.coords);
    m.param_norm = range_normalizer(data.params);

    m.branch1 = mlp_init(layer_sizes(bin, arch, m.latent_dim), Rng::mix(seed, 1));
    m.branch2 = mlp_init(layer_sizes(m.d_mu, arch, m.latent_dim), Rng::mix(seed, 4));
    m.trunk = mlp_init(layer_sizes(m.d, arch, m.latent_dim), Rng::mix(seed, 2));
    m.combiner = mlp_init({m.latent_dim, m.output_size()}, Rng::mix(seed, 3),
                          arch.combiner_output_tanh ? Activation::Tanh : Activation::Identity);
    return m;
}

namespace {

void elementwise_product(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
    out.reshape(a.rows(), a.cols());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) po[i] = pa[i] * pb[i];
}

// Operator rows for a batch of points sharing one model evaluation path.
DenseMatrix operator_rows(const Mlp& branch, const Mlp& trunk, const Mlp& combiner,
                          const DenseMatrix& branch_in, const DenseMatrix& trunk_in,
                          const std::vector<double>* param_latent) {
    MlpCache bc, tc, cc;
    const DenseMatrix& b = mlp_forward_batch(branch, branch_in, bc);
    const DenseMatrix& t = mlp_forward_batch(trunk, trunk_in, tc);
    DenseMatrix e;
    elementwise_product(b, t, e);
    if (param_latent) {
        for (std::size_t i = 0; i < e.rows(); ++i) {
            double* ei = e.data() + i * e.cols();
            for (std::size_t p = 0; p < e.cols(); ++p) ei[p] *= (*param_latent)[p];
        }
    }
    return mlp_forward_batch(combiner, e, cc);
}

std::vector<double> contract_operator(const DenseMatrix& rows,
                                      std::span<const double> quad_coeffs,
                                      std::size_t s_quad, std::size_t d_field) {
    std::vector<double> tau(rows.rows() * d_field, 0.0);
    for (std::size_t q = 0; q < rows.rows(); ++q) {
        const double* row = rows.data() + q * rows.cols();
        for (std::size_t c = 0; c < d_field; ++c) {
            double acc = 0.0;
            for (std::size_t s = 0; s < s_quad; ++s) acc += quad_coeffs[s] * row[c * s_quad + s];
            tau[q * d_field + c] = acc;
        }
    }
    return tau;
}

}  // namespace

std::vector<double> quadnet_eval(const QuadNetModel& model,
                                 std::span<const double> modes_at_x,
                                 std::span<const double> x) {
    if (modes_at_x.size() != model.r * model.d_field)
        throw InvalidInput("quadnet_eval: mode values must carry r * d_field entries");
    if (x.size() != model.d) throw InvalidInput("quadnet_eval: coordinate dimension mismatch");
    DenseMatrix mv(1, modes_at_x.size());
    std::copy(modes_at_x.begin(), modes_at_x.end(), mv.data());
    DenseMatrix xs(1, x.size());
    std::copy(x.begin(), x.end(), xs.data());
    const DenseMatrix bin =
        build_branch_batch(model.branch_input, model.r, model.d_field, model.mode_norm, mv);
    const DenseMatrix tin = normalize_rows(model.coord_norm, xs);
    const DenseMatrix rows =
        operator_rows(model.branch, model.trunk, model.combiner, bin, tin, nullptr);
    return {rows.data(), rows.data() + rows.cols()};
}

std::vector<double> quadnet_mu_eval(const QuadNetMuModel& model,
                                    std::span<const double> modes_at_x,
                                    std::span<const double> x,
                                    std::span<const double> mu) {
    if (modes_at_x.size() != model.r * model.d_field)
        throw InvalidInput("quadnet_mu_eval: mode values must carry r * d_field entries");
    if (x.size() != model.d)
        throw InvalidInput("quadnet_mu_eval: coordinate dimension mismatch");
    if (mu.size() != model.d_mu)
        throw InvalidInput("quadnet_mu_eval: parameter dimension mismatch");

    DenseMatrix mv(1, modes_at_x.size());
    std::copy(modes_at_x.begin(), modes_at_x.end(), mv.data());
    DenseMatrix xs(1, x.size());
    std::copy(x.begin(), x.end(), xs.data());
    DenseMatrix ms(1, mu.size());
    std::copy(mu.begin(), mu.end(), ms.data());

    const DenseMatrix bin =
        build_branch_batch(model.branch_input, model.r, model.d_field, model.mode_norm, mv);
    const DenseMatrix tin = normalize_rows(model.coord_norm, xs);
    const DenseMatrix pin = normalize_rows(model.param_norm, ms);
    MlpCache pc;
    const DenseMatrix& b2 = mlp_forward_batch(model.branch2, pin, pc);
    const std::vector<double> latent(b2.data(), b2.data() + b2.cols());
    const DenseMatrix rows =
        operator_rows(model.branch1, model.trunk, model.combiner, bin, tin, &latent);
    return {rows.data(), rows.data() + rows.cols()};
}

std::vector<double> predict_correction(const QuadNetModel& model,
                                       const DenseMatrix& mode_values,
                                       const DenseMatrix& coords,
                                       std::span<const double> coeffs) {
    if (coeffs.size() != model.r) throw InvalidInput("predict_correction: r mismatch");
    if (coords.cols() != model.d)
        throw InvalidInput("predict_correction: coordinate dimension mismatch");
    if (mode_values.rows() != coords.rows())
        throw InvalidInput("predict_correction: point counts disagree");
    const DenseMatrix bin = build_branch_batch(model.branch_input, model.r, model.d_field,
                                               model.mode_norm, mode_values);
    const DenseMatrix tin = normalize_rows(model.coord_norm, coords);
    const DenseMatrix rows =
        operator_rows(model.branch, model.trunk, model.combiner, bin, tin, nullptr);
    return contract_operator(rows, pairwise_products(coeffs), model.s_quad(), model.d_field);
}

std::vector<double> predict_correction(const QuadNetMuModel& model,
                                       const DenseMatrix& mode_values,
                                       const DenseMatrix& coords,
                                       std::span<const double> coeffs,
                                       std::span<const double> mu) {
    if (coeffs.size() != model.r) throw InvalidInput("predict_correction: r mismatch");
    if (coords.cols() != model.d)
        throw InvalidInput("predict_correction: coordinate dimension mismatch");
    if (mode_values.rows() != coords.rows())
        throw InvalidInput("predict_correction: point counts disagree");
    if (mu.size() != model.d_mu)
        throw InvalidInput("predict_correction: parameter dimension mismatch");

    DenseMatrix ms(1, mu.size());
    std::copy(mu.begin(), mu.end(), ms.data());
    const DenseMatrix pin = normalize_rows(model.param_norm, ms);
    MlpCache pc;
    const DenseMatrix& b2 = mlp_forward_batch(model.branch2, pin, pc);
    const std::vector<double> latent(b2.data(), b2.data() + b2.cols());

    const DenseMatrix bin = build_branch_batch(model.branch_input, model.r, model.d_field,
                                               model.mode_norm, mode_values);
    const DenseMatrix tin = normalize_rows(model.coord_norm, coords);
    const DenseMatrix rows =
        operator_rows(model.branch1, model.trunk, model.combiner, bin, tin, &latent);
    return contract_operator(rows, pairwise_products(coeffs), model.s_quad(), model.d_field);
}

namespace {

DenseMatrix mesh_mode_values(const PodBasis& basis) {
    DenseMatrix mv(basis.n_dof(), basis.r() * basis.d_field);
    for (std::size_t i = 0; i < basis.n_dof(); ++i) {
        const std::vector<double> row = basis.mode_values_at(i);
        std::copy(row.begin(), row.end(), mv.data() + i * row.size());
    }
    return mv;
}

}  // namespace

std::vector<double> predict_correction(const QuadNetModel& model, const PodBasis& basis,
                                       std::span<const double> coeffs) {
    return predict_correction(model, mesh_mode_values(basis), basis.points, coeffs);
}

std::vector<double> predict_correction(const QuadNetMuModel& model, const PodBasis& basis,
                                       std::span<const double> coeffs,
                                       std::span<const double> mu) {
    return predict_correction(model, mesh_mode_values(basis), basis.points, coeffs, mu);
}

double relative_loss(const std::vector<std::vector<double>>& pred,
                     const std::vector<std::vector<double>>& exact) {
    if (pred.size() != exact.size())
        throw InvalidInput("relative_loss: snapshot counts disagree");
    if (pred.empty()) throw InvalidInput("relative_loss: empty input");
    double loss = 0.0;
    std::size_t included = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i].size() != exact[i].size())
            throw InvalidInput("relative_loss: field lengths disagree");
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < pred[i].size(); ++k) {
            const double d = pred[i][k] - exact[i][k];
            num += d * d;
            den += exact[i][k] * exact[i][k];
        }
        if (den < kDegenerateNorm2) {
            std::cerr << "relative_loss: excluding snapshot " << i
                      << " with degenerate correction norm\n";
            continue;
        }
        loss += num / den;
        ++included;
    }
    if (included == 0) throw DegenerateTarget("relative_loss: all targets degenerate");
    return loss / static_cast<double>(included);
}

std::size_t parameter_count(const QuadNetModel& model) {
    return parameter_count(model.branch) + parameter_count(model.trunk) +
           parameter_count(model.combiner);
}

std::size_t parameter_count(const QuadNetMuModel& model) {
    return parameter_count(model.branch1) + parameter_count(model.branch2) +
           parameter_count(model.trunk) + parameter_count(model.combiner);
}

void get_parameters(const QuadNetModel& model, std::span<double> out) {
    if (out.size() != parameter_count(model))
        throw InvalidInput("get_parameters: wrong buffer size");
    double* p = out.data();
    pack_parameters(model.branch, p);
    p += parameter_count(model.branch);
    pack_parameters(model.trunk, p);
    p += parameter_count(model.trunk);
    pack_parameters(model.combiner, p);
}

void get_parameters(const QuadNetMuModel& model, std::span<double> out) {
    if (out.size() != parameter_count(model))
        throw InvalidInput("get_parameters: wrong buffer size");
    double* p = out.data();
    pack_parameters(model.branch1, p);
    p += parameter_count(model.branch1);
    pack_parameters(model.branch2, p);
    p += parameter_count(model.branch2);
    pack_parameters(model.trunk, p);
    p += parameter_count(model.trunk);
    pack_parameters(model.combiner, p);
}

void set_parameters(QuadNetModel& model, std::span<const double> in) {
    if (in.size() != parameter_count(model))
        throw InvalidInput("set_parameters: wrong buffer size");
    const double* p = in.data();
    unpack_parameters(model.branch, p);
    p += parameter_count(model.branch);
    unpack_parameters(model.trunk, p);
    p += parameter_count(model.trunk);
    unpack_parameters(model.combiner, p);
}

void set_parameters(QuadNetMuModel& model, std::span<const double> in) {
    if (in.size() != parameter_count(model))
        throw InvalidInput("set_parameters: wrong buffer size");
    const double* p = in.data();
    unpack_parameters(model.branch1, p);
    p += parameter_count(model.branch1);
    unpack_parameters(model.branch2, p);
    p += parameter_count(model.branch2);
    unpack_parameters(model.trunk, p);
    p += parameter_count(model.trunk);
    unpack_parameters(model.combiner, p);
}

namespace detail {

namespace {

std::vector<double> correction_inv_norms(const CorrectionTrainingSet& data,
                                         std::size_t* included) {
    std::vector<double> inv(data.n_snap(), 0.0);
    *included = 0;
    for (std::size_t i = 0; i < data.n_snap(); ++i) {
        double den = 0.0;
        for (double v : data.corrections[i]) den += v * v;
        if (den < kDegenerateNorm2) {
            std::cerr << "training: excluding snapshot " << i
                      << " with degenerate correction norm\n";
            continue;
        }
        inv[i] = 1.0 / den;
        ++(*included);
    }
    if (*included == 0) throw DegenerateTarget("training: all corrections degenerate");
    return inv;
}

}  // namespace

PreparedBatch prepare_batch(const QuadNetModel& model, const CorrectionTrainingSet& data) {
    check_training_set(data);
    if (data.r != model.r || data.d_field != model.d_field)
        throw InvalidInput("prepare_batch: model and data disagree on r or d_field");
    PreparedBatch b;
    b.data = &data;
    b.branch_in = build_branch_batch(model.branch_input, model.r, model.d_field,
                                     model.mode_norm, data.mode_values);
    b.trunk_in = normalize_rows(model.coord_norm, data.coords);
    b.quad_coeffs.reserve(data.n_snap());
    for (const auto& a : data.reduced_coeffs) b.quad_coeffs.push_back(pairwise_products(a));
    b.inv_norm2 = correction_inv_norms(data, &b.n_included);
    return b;
}

PreparedBatch prepare_batch(const QuadNetMuModel& model, const CorrectionTrainingSet& data) {
    check_training_set(data);
    if (data.r != model.r || data.d_field != model.d_field)
        throw InvalidInput("prepare_batch: model and data disagree on r or d_field");
    if (data.params.cols() != model.d_mu)
        throw InvalidInput("prepare_batch: parameter dimension mismatch");
    PreparedBatch b;
    b.data = &data;
    b.branch_in = build_branch_batch(model.branch_input, model.r, model.d_field,
                                     model.mode_norm, data.mode_values);
    b.trunk_in = normalize_rows(model.coord_norm, data.coords);
    b.param_in = normalize_rows(model.param_norm, data.params);
    b.quad_coeffs.reserve(data.n_snap());
    for (const auto& a : data.reduced_coeffs) b.quad_coeffs.push_back(pairwise_products(a));
    b.inv_norm2 = correction_inv_norms(data, &b.n_included);
    return b;
}

struct EngineWork {
    MlpCache branch_cache, trunk_cache, combiner_cache, param_cache;
    DenseMatrix merged;      // branch (.) trunk product per point
    DenseMatrix hidden;      // merged scaled by one snapshot's parameter latent
    DenseMatrix grad_out;    // dL/d operator rows
    DenseMatrix grad_merged;
    DenseMatrix grad_param_latent;  // n_snap x p
};

Engine::Engine() : work_(new EngineWork) {}
Engine::~Engine() { delete work_; }

double Engine::run(const QuadNetModel& model, const PreparedBatch& batch,
                   std::vector<double>* gradients) {
    EngineWork& w = *work_;
    const CorrectionTrainingSet& data = *batch.data;
    const std::size_t n_pts = data.n_pts();
    const std::size_t s_quad = model.s_quad();
    const std::size_t df = model.d_field;
    const std::size_t s_out = model.output_size();

    const DenseMatrix& b = mlp_forward_batch(model.branch, batch.branch_in, w.branch_cache);
    const DenseMatrix& t = mlp_forward_batch(model.trunk, batch.trunk_in, w.trunk_cache);
    elementwise_product(b, t, w.merged);
    const DenseMatrix& out = mlp_forward_batch(model.combiner, w.merged, w.combiner_cache);

    const double inv_count = 1.0 / static_cast<double>(batch.n_included);
    double loss = 0.0;
    if (gradients) {
        w.grad_out.reshape(n_pts, s_out);
        std::fill(w.grad_out.data(), w.grad_out.data() + w.grad_out.size(), 0.0);
    }
    for (std::size_t i = 0; i < data.n_snap(); ++i) {
        const double wi = batch.inv_norm2[i];
        if (wi == 0.0) continue;
        const double* qc = batch.quad_coeffs[i].data();
        const double* tau = data.corrections[i].data();
        double snap_loss = 0.0;
        for (std::size_t q = 0; q < n_pts; ++q) {
            const double* row = out.data() + q * s_out;
            double* grow = gradients ? w.grad_out.data() + q * s_out : nullptr;
            for (std::size_t c = 0; c < df; ++c) {
                const double* block = row + c * s_quad;
                double pred = 0.0;
                for (std::size_t s = 0; s < s_quad; ++s) pred += qc[s] * block[s];
                const double resid = pred - tau[q * df + c];
                snap_loss += resid * resid;
                if (gradients) {
                    const double coef = 2.0 * wi * inv_count * resid;
                    double* gblock = grow + c * s_quad;
                    for (std::size_t s = 0; s < s_quad; ++s) gblock[s] += coef * qc[s];
                }
            }
        }
        loss += wi * snap_loss;
    }
    loss *= inv_count;
    if (!gradients) return loss;

    MlpGrads bg = mlp_zero_grads(model.branch);
    MlpGrads tg = mlp_zero_grads(model.trunk);
    MlpGrads cg = mlp_zero_grads(model.combiner);

    const DenseMatrix grad_merged =
        mlp_backward_batch(model.combiner, w.combiner_cache, w.grad_out, cg);
    DenseMatrix grad_branch, grad_trunk;
    elementwise_product(grad_merged, t, grad_branch);
    elementwise_product(grad_merged, b, grad_trunk);
    mlp_backward_batch(model.branch, w.branch_cache, grad_branch, bg);
    mlp_backward_batch(model.trunk, w.trunk_cache, grad_trunk, tg);

    gradients->resize(parameter_count(model));
    double* p = gradients->data();
    pack_gradients(bg, p);
    p += parameter_count(model.branch);
    pack_gradients(tg, p);
    p += parameter_count(model.trunk);
    pack_gradients(cg, p);
    return loss;
}

// Single-affine-combiner fast path: the operator row is H W + b with
// H = E . b2_i, so predictions and all gradient contractions collapse to a
// few small matrix-vector products per snapshot and the operator rows are
// never materialized. Exact same math as the generic path up to summation
// order.
double Engine::run_fused_mu(const QuadNetMuModel& model, const PreparedBatch& batch,
                            std::vector<double>* gradients) {
    EngineWork& w = *work_;
    const CorrectionTrainingSet& data = *batch.data;
    const std::size_t n_pts = data.n_pts();
    const std::size_t n_snap = data.n_snap();
    const std::size_t s_quad = model.s_quad();
    const std::size_t df = model.d_field;
    const std::size_t s_out = model.output_size();
    const std::size_t p_dim = model.latent_dim;

    const DenseMatrix& b1 = mlp_forward_batch(model.branch1, batch.branch_in, w.branch_cache);
    const DenseMatrix& t = mlp_forward_batch(model.trunk, batch.trunk_in, w.trunk_cache);
    const DenseMatrix& b2 = mlp_forward_batch(model.branch2, batch.param_in, w.param_cache);
    elementwise_product(b1, t, w.merged);
    const DenseMatrix& e = w.merged;

    const DenseMatrix& cw = model.combiner.weights[0];  // p_dim x s_out
    const std::vector<double>& cb = model.combiner.biases[0];

    const double inv_count = 1.0 / static_cast<double>(batch.n_included);
    double loss = 0.0;

    DenseMatrix grad_cw, grad_merged_acc;
    std::vector<double> grad_cb;
    if (gradients) {
        grad_cw = DenseMatrix(p_dim, s_out);
        grad_cb.assign(s_out, 0.0);
        grad_merged_acc = DenseMatrix(n_pts, p_dim);
        w.grad_param_latent.reshape(n_snap, p_dim);
        std::fill(w.grad_param_latent.data(),
                  w.grad_param_latent.data() + w.grad_param_latent.size(), 0.0);
    }

    std::vector<double> v(p_dim * df), wi_vec(p_dim * df), beta(df);
    std::vector<double> coef(n_pts * df), m_acc(p_dim * df), colsum(df);

    for (std::size_t i = 0; i < n_snap; ++i) {
        const double wi = batch.inv_norm2[i];
        if (wi == 0.0) continue;
        const double* qc = batch.quad_coeffs[i].data();
        const double* latent = b2.data() + i * p_dim;
        const double* tau = data.corrections[i].data();

        // v[p][c] = sum_s W[p][c*s_quad+s] qc[s]; beta[c] likewise from b.
        for (std::size_t p = 0; p < p_dim; ++p) {
            const double* wp = cw.data() + p * s_out;
            for (std::size_t c = 0; c < df; ++c) {
                double acc = 0.0;
                for (std::size_t s = 0; s < s_quad; ++s) acc += wp[c * s_quad + s] * qc[s];
                v[p * df + c] = acc;
                wi_vec[p * df + c] = latent[p] * acc;
            }
        }
        for (std::size_t c = 0; c < df; ++c) {
            double acc = 0.0;
            for (std::size_t s = 0; s < s_quad; ++s) acc += cb[c * s_quad + s] * qc[s];
            beta[c] = acc;
        }

        const double scale = 2.0 * wi * inv_count;
        double snap_loss = 0.0;
        for (std::size_t q = 0; q < n_pts; ++q) {
            const double* __restrict eq = e.data() + q * p_dim;
            for (std::size_t c = 0; c < df; ++c) {
                double pred = beta[c];
                for (std::size_t p = 0; p < p_dim; ++p) pred += eq[p] * wi_vec[p * df + c];
                const double resid = pred - tau[q * df + c];
                snap_loss += resid * resid;
                coef[q * df + c] = scale * resid;
            }
        }
        loss += wi * snap_loss;
        if (!gradients) continue;

        // m[p][c] = sum_q E[q][p] coef[q][c]; colsum[c] = sum_q coef[q][c];
        // dE[q][p] += sum_c coef[q][c] wi_vec[p][c].
        std::fill(m_acc.begin(), m_acc.end(), 0.0);
        std::fill(colsum.begin(), colsum.end(), 0.0);
        for (std::size_t q = 0; q < n_pts; ++q) {
            const double* __restrict eq = e.data() + q * p_dim;
            double* __restrict gq = grad_merged_acc.data() + q * p_dim;
            for (std::size_t c = 0; c < df; ++c) {
                const double cq = coef[q * df + c];
                if (df == 1) {
                    for (std::size_t p = 0; p < p_dim; ++p) {
                        m_acc[p] += eq[p] * cq;
                        gq[p] += cq * wi_vec[p];
                    }
                } else {
                    for (std::size_t p = 0; p < p_dim; ++p) {
                        m_acc[p * df + c] += eq[p] * cq;
                        gq[p] += cq * wi_vec[p * df + c];
                    }
                }
                colsum[c] += cq;
            }
        }

        double* gl = w.grad_param_latent.data() + i * p_dim;
        for (std::size_t p = 0; p < p_dim; ++p) {
            double acc = 0.0;
            double* gwp = grad_cw.data() + p * s_out;
            for (std::size_t c = 0; c < df; ++c) {
                acc += v[p * df + c] * m_acc[p * df + c];
                const double f = latent[p] * m_acc[p * df + c];
                for (std::size_t s = 0; s < s_quad; ++s) gwp[c * s_quad + s] += f * qc[s];
            }
            gl[p] = acc;
        }
        for (std::size_t c = 0; c < df; ++c)
            for (std::size_t s = 0; s < s_quad; ++s)
                grad_cb[c * s_quad + s] += colsum[c] * qc[s];
    }
    loss *= inv_count;
    if (!gradients) return loss;

    MlpGrads b1g = mlp_zero_grads(model.branch1);
    MlpGrads b2g = mlp_zero_grads(model.branch2);
    MlpGrads tg = mlp_zero_grads(model.trunk);

    DenseMatrix grad_branch, grad_trunk;
    elementwise_product(grad_merged_acc, t, grad_branch);
    elementwise_product(grad_merged_acc, b1, grad_trunk);
    mlp_backward_batch(model.branch1, w.branch_cache, grad_branch, b1g);
    mlp_backward_batch(model.trunk, w.trunk_cache, grad_trunk, tg);
    mlp_backward_batch(model.branch2, w.param_cache, w.grad_param_latent, b2g);

    gradients->resize(parameter_count(model));
    double* p = gradients->data();
    pack_gradients(b1g, p);
    p += parameter_count(model.branch1);
    pack_gradients(b2g, p);
    p += parameter_count(model.branch2);
    pack_gradients(tg, p);
    p += parameter_count(model.trunk);
    std::copy(grad_cw.entries().begin(), grad_cw.entries().end(), p);
    p += grad_cw.size();
    std::copy(grad_cb.begin(), grad_cb.end(), p);
    return loss;
}

double Engine::run(const QuadNetMuModel& model, const PreparedBatch& batch,
                   std::vector<double>* gradients) {
    if (model.combiner.n_layers() == 1 &&
        model.combiner.output_activation == Activation::Identity)
        return run_fused_mu(model, batch, gradients);

    EngineWork& w = *work_;
    const CorrectionTrainingSet& data = *batch.data;
    const std::size_t n_pts = data.n_pts();
    const std::size_t n_snap = data.n_snap();
    const std::size_t s_quad = model.s_quad();
    const std::size_t df = model.d_field;
    const std::size_t s_out = model.output_size();
    const std::size_t p_dim = model.latent_dim;

    const DenseMatrix& b1 = mlp_forward_batch(model.branch1, batch.branch_in, w.branch_cache);
    const DenseMatrix& t = mlp_forward_batch(model.trunk, batch.trunk_in, w.trunk_cache);
    const DenseMatrix& b2 = mlp_forward_batch(model.branch2, batch.param_in, w.param_cache);
    elementwise_product(b1, t, w.merged);

    const double inv_count = 1.0 / static_cast<double>(batch.n_included);
    double loss = 0.0;

    MlpGrads cg;
    DenseMatrix grad_merged_acc;
    if (gradients) {
        cg = mlp_zero_grads(model.combiner);
        grad_merged_acc.reshape(n_pts, p_dim);
        std::fill(grad_merged_acc.data(), grad_merged_acc.data() + grad_merged_acc.size(), 0.0);
        w.grad_param_latent.reshape(n_snap, p_dim);
        std::fill(w.grad_param_latent.data(),
                  w.grad_param_latent.data() + w.grad_param_latent.size(), 0.0);
    }

    for (std::size_t i = 0; i < n_snap; ++i) {
        const double wi = batch.inv_norm2[i];
        if (wi == 0.0) continue;
        const double* latent = b2.data() + i * p_dim;

        w.hidden.reshape(n_pts, p_dim);
        for (std::size_t q = 0; q < n_pts; ++q) {
            const double* mq = w.merged.data() + q * p_dim;
            double* hq = w.hidden.data() + q * p_dim;
            for (std::size_t k = 0; k < p_dim; ++k) hq[k] = mq[k] * latent[k];
        }
        const DenseMatrix& out = mlp_forward_batch(model.combiner, w.hidden, w.combiner_cache);

        const double* qc = batch.quad_coeffs[i].data();
        const double* tau = data.corrections[i].data();
        double snap_loss = 0.0;
        if (gradients) {
            w.grad_out.reshape(n_pts, s_out);
            std::fill(w.grad_out.data(), w.grad_out.data() + w.grad_out.size(), 0.0);
        }
        for (std::size_t q = 0; q < n_pts; ++q) {
            const double* row = out.data() + q * s_out;
            double* grow = gradients ? w.grad_out.data() + q * s_out : nullptr;
            for (std::size_t c = 0; c < df; ++c) {
                const double* block = row + c * s_quad;
                double pred = 0.0;
                for (std::size_t s = 0; s < s_quad; ++s) pred += qc[s] * block[s];
                const double resid = pred - tau[q * df + c];
                snap_loss += resid * resid;
                if (gradients) {
                    const double coef = 2.0 * wi * inv_count * resid;
                    double* gblock = grow + c * s_quad;
                    for (std::size_t s = 0; s < s_quad; ++s) gblock[s] += coef * qc[s];
                }
            }
        }
        loss += wi * snap_loss;

        if (gradients) {
            const DenseMatrix grad_hidden =
                mlp_backward_batch(model.combiner, w.combiner_cache, w.grad_out, cg);
            double* gl = w.grad_param_latent.data() + i * p_dim;
            for (std::size_t q = 0; q < n_pts; ++q) {
                const double* gh = grad_hidden.data() + q * p_dim;
                const double* mq = w.merged.data() + q * p_dim;
                double* gm = grad_merged_acc.data() + q * p_dim;
                for (std::size_t k = 0; k < p_dim; ++k) {
                    gm[k] += gh[k] * latent[k];
                    gl[k] += gh[k] * mq[k];
                }
            }
        }
    }
    loss *= inv_count;
    if (!gradients) return loss;

    MlpGrads b1g = mlp_zero_grads(model.branch1);
    MlpGrads b2g = mlp_zero_grads(model.branch2);
    MlpGrads tg = mlp_zero_grads(model.trunk);

    DenseMatrix grad_branch, grad_trunk;
    elementwise_product(grad_merged_acc, t, grad_branch);
    elementwise_product(grad_merged_acc, b1, grad_trunk);
    mlp_backward_batch(model.branch1, w.branch_cache, grad_branch, b1g);
    mlp_backward_batch(model.trunk, w.trunk_cache, grad_trunk, tg);
    mlp_backward_batch(model.branch2, w.param_cache, w.grad_param_latent, b2g);

    gradients->resize(parameter_count(model));
    double* p = gradients->data();
    pack_gradients(b1g, p);
    p += parameter_count(model.branch1);
    pack_gradients(b2g, p);
    p += parameter_count(model.branch2);
    pack_gradients(tg, p);
    p += parameter_count(model.trunk);
    pack_gradients(cg, p);
    return loss;
}

}  // namespace detail

LossAndGradients loss_and_gradients(const QuadNetModel& model,
                                    const CorrectionTrainingSet& data) {
    detail::PreparedBatch batch = detail::prepare_batch(model, data);
    detail::Engine engine;
    LossAndGradients out;
    out.loss = engine.run(model, batch, &out.gradients);
    return out;
}

LossAndGradients loss_and_gradients(const QuadNetMuModel& model,
                                    const CorrectionTrainingSet& data) {
    detail::PreparedBatch batch = detail::prepare_batch(model, data);
    detail::Engine engine;
    LossAndGradients out;
    out.loss = engine.run(model, batch, &out.gradients);
    return out;
}

}  // namespace quadrom
