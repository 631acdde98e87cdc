#include "quadrom/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "quadrom/errors.hpp"

namespace quadrom {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "quadrom-checkpoint v1";

void write_layers(std::ostream& out, const std::string& key, const Mlp& net) {
    out << key;
    for (std::size_t s : net.layer_sizes) out << ' ' << s;
    out << '\n';
    out << key << "_activation "
        << (net.output_activation == Activation::Tanh ? "tanh" : "identity") << '\n';
}

void append_normalizer(std::vector<double>& blob, const Normalizer& n) {
    blob.insert(blob.end(), n.offset.begin(), n.offset.end());
    blob.insert(blob.end(), n.scale.begin(), n.scale.end());
}

std::size_t take_normalizer(const std::vector<double>& blob, std::size_t pos,
                            std::size_t width, Normalizer& n) {
    n.offset.assign(blob.begin() + pos, blob.begin() + pos + width);
    pos += width;
    n.scale.assign(blob.begin() + pos, blob.begin() + pos + width);
    return pos + width;
}

struct Header {
    std::string kind;
    std::size_t r = 0, d = 0, d_mu = 1, d_field = 1, latent = 0, doubles = 0;
    BranchInput branch_input = BranchInput::FlattenComponents;
    std::vector<std::size_t> branch_layers, branch2_layers, trunk_layers, combiner_layers;
    Activation combiner_activation = Activation::Identity;
};

Mlp restore_mlp(const std::vector<std::size_t>& sizes, Activation out_act) {
    Mlp net = mlp_init(sizes, 0, out_act);  // shapes only; parameters overwritten below
    return net;
}

}  // namespace

template <typename Model>
static void write_common(std::ostream& out, const Model& model) {
    out << "r " << model.r << '\n'
        << "d " << model.d << '\n'
        << "d_field " << model.d_field << '\n'
        << "latent " << model.latent_dim << '\n'
        << "branch_input "
        << (model.branch_input == BranchInput::FlattenComponents ? "flatten" : "magnitude")
        << '\n';
}

void save_checkpoint(const QuadNetModel& model, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out << kMagic << '\n' << "kind quadnet\n";
    write_common(out, model);
    write_layers(out, "branch_layers", model.branch);
    write_layers(out, "trunk_layers", model.trunk);
    write_layers(out, "combiner_layers", model.combiner);

    std::vector<double> blob;
    append_normalizer(blob, model.mode_norm);
    append_normalizer(blob, model.coord_norm);
    std::vector<double> params(parameter_count(model));
    get_parameters(model, params);
    blob.insert(blob.end(), params.begin(), params.end());

    out << "doubles " << blob.size() << "\ndata\n";
    detail::write_doubles_le(out, blob);
    if (!out) throw IoError("checkpoint write failed: " + path.string());
}

void save_checkpoint(const QuadNetMuModel& model, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out << kMagic << '\n' << "kind quadnet-mu\n";
    write_common(out, model);
    out << "d_mu " << model.d_mu << '\n';
    write_layers(out, "branch_layers", model.branch1);
    write_layers(out, "branch2_layers", model.branch2);
    write_layers(out, "trunk_layers", model.trunk);
    write_layers(out, "combiner_layers", model.combiner);

    std::vector<double> blob;
    append_normalizer(blob, model.mode_norm);
    append_normalizer(blob, model.coord_norm);
    append_normalizer(blob, model.param_norm);
    std::vector<double> params(parameter_count(model));
    get_parameters(model, params);
    blob.insert(blob.end(), params.begin(), params.end());

    out << "doubles " << blob.size() << "\ndata\n";
    detail::write_doubles_le(out, blob);
    if (!out) throw IoError("checkpoint write failed: " + path.string());
}

std::variant<QuadNetModel, QuadNetMuModel> load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());

    std::string line;
    std::getline(in, line);
    if (line != kMagic) throw CorruptDataset("bad checkpoint header: " + path.string());

    Header h;
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string key;
        row >> key;
        if (key == "kind") {
            row >> h.kind;
        } else if (key == "r") {
            row >> h.r;
        } else if (key == "d") {
            row >> h.d;
        } else if (key == "d_mu") {
            row >> h.d_mu;
        } else if (key == "d_field") {
            row >> h.d_field;
        } else if (key == "latent") {
            row >> h.latent;
        } else if (key == "branch_input") {
            std::string v;
            row >> v;
            h.branch_input =
                v == "magnitude" ? BranchInput::ModeMagnitude : BranchInput::FlattenComponents;
        } else if (key.ends_with("_layers")) {
            std::vector<std::size_t> sizes;
            std::size_t s;
            while (row >> s) sizes.push_back(s);
            if (key == "branch_layers") h.branch_layers = sizes;
            else if (key == "branch2_layers") h.branch2_layers = sizes;
            else if (key == "trunk_layers") h.trunk_layers = sizes;
            else if (key == "combiner_layers") h.combiner_layers = sizes;
        } else if (key == "combiner_layers_activation") {
            std::string v;
            row >> v;
            h.combiner_activation = v == "tanh" ? Activation::Tanh : Activation::Identity;
        } else if (key == "doubles") {
            row >> h.doubles;
        } else if (key == "data") {
            break;
        }
        // other *_activation keys are always identity for the output layers
        // of branch/trunk nets and are accepted silently
    }
    if (h.kind.empty() || h.branch_layers.empty() || h.trunk_layers.empty() ||
        h.combiner_layers.empty())
        throw CorruptDataset("incomplete checkpoint header: " + path.string());

    const std::vector<double> blob = detail::read_doubles_le(in, h.doubles);

    if (h.kind == "quadnet") {
        QuadNetModel m;
        m.r = h.r;
        m.d = h.d;
        m.d_field = h.d_field;
        m.latent_dim = h.latent;
        m.branch_input = h.branch_input;
        m.branch = restore_mlp(h.branch_layers, Activation::Identity);
        m.trunk = restore_mlp(h.trunk_layers, Activation::Identity);
        m.combiner = restore_mlp(h.combiner_layers, h.combiner_activation);
        std::size_t pos = take_normalizer(blob, 0, h.branch_layers.front(), m.mode_norm);
        pos = take_normalizer(blob, pos, h.d, m.coord_norm);
        if (blob.size() - pos != parameter_count(m))
            throw CorruptDataset("checkpoint parameter count mismatch: " + path.string());
        set_parameters(m, {blob.data() + pos, blob.size() - pos});
        return m;
    }
    if (h.kind == "quadnet-mu") {
        QuadNetMuModel m;
        m.r = h.r;
        m.d = h.d;
        m.d_mu = h.d_mu;
        m.d_field = h.d_field;
        m.latent_dim = h.latent;
        m.branch_input = h.branch_input;
        m.branch1 = restore_mlp(h.branch_layers, Activation::Identity);
        m.branch2 = restore_mlp(h.branch2_layers, Activation::Identity);
        m.trunk = restore_mlp(h.trunk_layers, Activation::Identity);
        m.combiner = restore_mlp(h.combiner_layers, h.combiner_activation);
        std::size_t pos = take_normalizer(blob, 0, h.branch_layers.front(), m.mode_norm);
        pos = take_normalizer(blob, pos, h.d, m.coord_norm);
        pos = take_normalizer(blob, pos, h.d_mu, m.param_norm);
        if (blob.size() - pos != parameter_count(m))
            throw CorruptDataset("checkpoint parameter count mismatch: " + path.string());
        set_parameters(m, {blob.data() + pos, blob.size() - pos});
        return m;
    }
    throw CorruptDataset("unknown checkpoint kind: " + h.kind);
}

}  // namespace quadrom
