#include "quadrom/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "quadrom/errors.hpp"
#include "quadrom/rng.hpp"

namespace quadrom {

namespace fs = std::filesystem;

using detail::read_doubles_le;
using detail::write_doubles_le;

namespace {

void save_array(const fs::path& path, std::span<const double> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    write_doubles_le(out, values);
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<double> parse_csv_array(const fs::path& path, std::size_t expected) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<double> values;
    values.reserve(expected);
    std::string line;
    while (std::getline(in, line)) {
        for (char& ch : line)
            if (ch == ',' || ch == ';') ch = ' ';
        std::istringstream row(line);
        double v;
        while (row >> v) values.push_back(v);
    }
    if (values.size() != expected)
        throw CorruptDataset("csv array size " + std::to_string(values.size()) +
                             " differs from declared " + std::to_string(expected));
    return values;
}

std::vector<double> load_array(const fs::path& path, std::size_t expected) {
    if (!fs::exists(path)) throw IoError("missing file: " + path.string());
    if (path.extension() == ".csv") return parse_csv_array(path, expected);
    const auto bytes = fs::file_size(path);
    if (bytes != expected * 8)
        throw CorruptDataset("file " + path.string() + " holds " +
                             std::to_string(bytes / 8) + " values, manifest declares " +
                             std::to_string(expected));
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    return read_doubles_le(in, expected);
}

}  // namespace

DatasetManifest DatasetManifest::read(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto pos = line.find(' ');
        if (pos == std::string::npos) continue;
        kv[line.substr(0, pos)] = line.substr(pos + 1);
    }
    auto need = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw CorruptDataset("manifest missing key: " + key);
        return it->second;
    };
    DatasetManifest m;
    m.name = need("name");
    m.d = std::stoul(need("d"));
    m.d_field = std::stoul(need("d_field"));
    m.d_mu = std::stoul(need("d_mu"));
    m.n_dof = std::stoul(need("n_dof"));
    m.n_mu = std::stoul(need("n_mu"));
    m.coords_file = need("coords_file");
    m.params_file = need("params_file");
    m.snapshots_file = need("snapshots_file");
    if (kv.count("generator")) m.generator = kv["generator"];
    if (kv.count("seed")) m.seed = std::stoull(kv["seed"]);
    return m;
}

void DatasetManifest::write(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open manifest for writing: " + path.string());
    out << "name " << name << "\n"
        << "d " << d << "\n"
        << "d_field " << d_field << "\n"
        << "d_mu " << d_mu << "\n"
        << "n_dof " << n_dof << "\n"
        << "n_mu " << n_mu << "\n"
        << "coords_file " << coords_file << "\n"
        << "params_file " << params_file << "\n"
        << "snapshots_file " << snapshots_file << "\n"
        << "generator " << generator << "\n"
        << "seed " << seed << "\n";
    if (!out) throw IoError("manifest write failed: " + path.string());
}

SyntheticKind synthetic_kind_from_string(const std::string& name) {
    if (name == "exact-quadratic") return SyntheticKind::ExactQuadratic;
    if (name == "generic-nonlinear") return SyntheticKind::GenericNonlinear;
    throw InvalidInput("unknown synthetic kind: " + name);
}

std::string to_string(SyntheticKind kind) {
    return kind == SyntheticKind::ExactQuadratic ? "exact-quadratic" : "generic-nonlinear";
}

namespace {

// Spatial mode construction: tensor-product sinusoids placed per field
// component, then modified Gram-Schmidt in the discrete inner product over
// all degrees of freedom.
std::vector<std::vector<double>> build_spatial_modes(std::size_t nx, std::size_t ny,
                                                     std::size_t n_modes,
                                                     std::size_t d_field) {
    const std::size_t n_dof = nx * ny;
    const std::size_t len = n_dof * d_field;

    // Wavenumber pairs ordered by increasing p+q, then p.
    std::vector<std::pair<std::size_t, std::size_t>> waves;
    for (std::size_t total = 2; waves.size() < n_modes * d_field; ++total)
        for (std::size_t p = 1; p < total; ++p) waves.emplace_back(p, total - p);

    std::vector<std::vector<double>> modes(n_modes, std::vector<double>(len, 0.0));
    const double pi = std::acos(-1.0);
    for (std::size_t k = 0; k < n_modes; ++k) {
        for (std::size_t c = 0; c < d_field; ++c) {
            const auto [p, q] = waves[k * d_field + c];
            for (std::size_t iy = 0; iy < ny; ++iy) {
                const double y = static_cast<double>(iy) / static_cast<double>(ny - 1);
                for (std::size_t ix = 0; ix < nx; ++ix) {
                    const double x = static_cast<double>(ix) / static_cast<double>(nx - 1);
                    const std::size_t node = iy * nx + ix;
                    modes[k][node * d_field + c] =
                        std::sin(pi * static_cast<double>(p) * x) *
                        std::sin(pi * static_cast<double>(q) * y);
                }
            }
        }
    }

    for (std::size_t k = 0; k < n_modes; ++k) {
        const double before = norm2(modes[k]);
        for (std::size_t prev = 0; prev < k; ++prev) {
            const double proj = dot(modes[k], modes[prev]);
            for (std::size_t i = 0; i < len; ++i) modes[k][i] -= proj * modes[prev][i];
        }
        const double after = norm2(modes[k]);
        if (after <= 1e-8 * before || after == 0.0)
            throw InvalidInput("generate_synthetic: grid too coarse for requested mode count");
        for (std::size_t i = 0; i < len; ++i) modes[k][i] /= after;
    }
    return modes;
}

struct QuadLatent {
    // Homogeneous quadratic form in the linear latents, expressed as a
    // polynomial in even powers of the centered parameter: sum_e coeff[e] *
    // t^(2(e+1)), e = 0 .. 2*r_lin - 2.
    std::vector<double> even_coeffs;
};

// Linear latents are odd shifted monomials t^(2k+1) of the centered,
// half-range-scaled parameter, so quadratic combinations are even
// polynomials. Over any parameter sample symmetric about the interval
// midpoint the two groups are exactly uncorrelated, which keeps the leading
// POD subspace equal to the span of the first r_lin spatial modes.
double linear_latent(std::size_t k, double t) {
    return std::pow(t, static_cast<double>(2 * k + 1));
}

std::vector<QuadLatent> build_quad_latents(std::size_t r_lin, std::size_t count,
                                           std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x71ad'c0effULL);
    std::vector<QuadLatent> latents;
    latents.reserve(count);
    constexpr double kQuadScale = 1e-2;  // keeps the quadratic block strictly
                                         // below the smallest linear singular value
    for (std::size_t m = 0; m < count; ++m) {
        QuadLatent q;
        while (true) {
            q.even_coeffs.assign(2 * r_lin - 1, 0.0);
            for (std::size_t i = 0; i < r_lin; ++i)
                for (std::size_t j = 0; j <= i; ++j)
                    q.even_coeffs[i + j] += rng.uniform(-1.0, 1.0);
            // Mean square over t in [-1,1]: exact for polynomials.
            double ms = 0.0;
            for (std::size_t e = 0; e < q.even_coeffs.size(); ++e)
                for (std::size_t f = 0; f < q.even_coeffs.size(); ++f)
                    ms += q.even_coeffs[e] * q.even_coeffs[f] /
                          static_cast<double>(2 * (e + f + 2) + 1);
            if (ms > 1e-12) {
                const double scale = kQuadScale / std::sqrt(ms);
                for (double& c : q.even_coeffs) c *= scale;
                break;
            }
        }
        latents.push_back(std::move(q));
    }
    return latents;
}

double quad_latent_eval(const QuadLatent& q, double t) {
    const double t2 = t * t;
    double value = 0.0;
    double power = t2;
    for (double c : q.even_coeffs) {
        value += c * power;
        power *= t2;
    }
    return value;
}

}  // namespace

SnapshotSet generate_synthetic(const SyntheticSpec& spec) {
    if (spec.nx < 4 || spec.ny < 4)
        throw InvalidInput("generate_synthetic: grid must be at least 4x4");
    if (spec.n_modes < 1) throw InvalidInput("generate_synthetic: need n_modes >= 1");
    if (spec.n_mu < 1) throw InvalidInput("generate_synthetic: need n_mu >= 1");
    if (spec.d_field < 1) throw InvalidInput("generate_synthetic: need d_field >= 1");
    if (!(spec.mu_hi > spec.mu_lo))
        throw InvalidInput("generate_synthetic: parameter range is empty");
    if (spec.kind == SyntheticKind::ExactQuadratic &&
        (spec.r_lin < 1 || spec.r_lin > spec.n_modes))
        throw InvalidInput("generate_synthetic: need 1 <= r_lin <= n_modes");

    const std::size_t n_dof = spec.nx * spec.ny;
    SnapshotSet set;
    set.name = spec.name;
    set.d_field = spec.d_field;
    set.generator = to_string(spec.kind);
    set.gen_seed = spec.seed;

    set.points = DenseMatrix(n_dof, 2);
    for (std::size_t iy = 0; iy < spec.ny; ++iy) {
        const double y = static_cast<double>(iy) / static_cast<double>(spec.ny - 1);
        for (std::size_t ix = 0; ix < spec.nx; ++ix) {
            const double x = static_cast<double>(ix) / static_cast<double>(spec.nx - 1);
            set.points(iy * spec.nx + ix, 0) = x;
            set.points(iy * spec.nx + ix, 1) = y;
        }
    }

    // Midpoint-equispaced parameter samples; symmetric about the interval
    // center and free of the endpoint zeros of the sine latents.
    set.params = DenseMatrix(spec.n_mu, 1);
    const double step = (spec.mu_hi - spec.mu_lo) / static_cast<double>(spec.n_mu);
    for (std::size_t j = 0; j < spec.n_mu; ++j)
        set.params(j, 0) = spec.mu_lo + (static_cast<double>(j) + 0.5) * step;

    const auto modes = build_spatial_modes(spec.nx, spec.ny, spec.n_modes, spec.d_field);

    std::vector<QuadLatent> quad_latents;
    if (spec.kind == SyntheticKind::ExactQuadratic && spec.n_modes > spec.r_lin)
        quad_latents = build_quad_latents(spec.r_lin, spec.n_modes - spec.r_lin, spec.seed);

    const double pi = std::acos(-1.0);
    set.fields.assign(spec.n_mu, std::vector<double>(n_dof * spec.d_field, 0.0));
    for (std::size_t j = 0; j < spec.n_mu; ++j) {
        const double mu = set.params(j, 0);
        std::vector<double> g(spec.n_modes, 0.0);
        if (spec.kind == SyntheticKind::ExactQuadratic) {
            const double t = (2.0 * mu - spec.mu_lo - spec.mu_hi) / (spec.mu_hi - spec.mu_lo);
            for (std::size_t k = 0; k < spec.r_lin; ++k) g[k] = linear_latent(k, t);
            for (std::size_t m = 0; m < quad_latents.size(); ++m)
                g[spec.r_lin + m] = quad_latent_eval(quad_latents[m], t);
        } else {
            const double s = (mu - spec.mu_lo) / (spec.mu_hi - spec.mu_lo);
            for (std::size_t k = 0; k < spec.n_modes; ++k)
                g[k] = std::sin(static_cast<double>(k + 1) * pi * s) /
                       static_cast<double>(k + 1);
        }
        auto& field = set.fields[j];
        for (std::size_t k = 0; k < spec.n_modes; ++k) {
            if (g[k] == 0.0) continue;
            for (std::size_t i = 0; i < field.size(); ++i) field[i] += g[k] * modes[k][i];
        }
    }
    return set;
}

std::filesystem::path save_dataset(const SnapshotSet& set, const fs::path& dir) {
    set.validate();
    fs::create_directories(dir);

    DatasetManifest m;
    m.name = set.name.empty() ? "dataset" : set.name;
    m.d = set.d();
    m.d_field = set.d_field;
    m.d_mu = set.d_mu();
    m.n_dof = set.n_dof();
    m.n_mu = set.n_mu();
    m.coords_file = "coords.bin";
    m.params_file = "params.bin";
    m.snapshots_file = "snapshots.bin";
    m.generator = set.generator;
    m.seed = set.gen_seed;

    save_array(dir / m.coords_file, set.points.entries());
    save_array(dir / m.params_file, set.params.entries());
    {
        std::ofstream out(dir / m.snapshots_file, std::ios::binary);
        if (!out) throw IoError("cannot open for writing: " + (dir / m.snapshots_file).string());
        for (const auto& f : set.fields) write_doubles_le(out, f);
        if (!out) throw IoError("write failed: " + (dir / m.snapshots_file).string());
    }
    const fs::path manifest_path = dir / "manifest.txt";
    m.write(manifest_path);
    return manifest_path;
}

SnapshotSet load_dataset(const fs::path& manifest_path) {
    if (!fs::exists(manifest_path)) throw IoError("missing manifest: " + manifest_path.string());
    const DatasetManifest m = DatasetManifest::read(manifest_path);
    const fs::path dir = manifest_path.parent_path();

    SnapshotSet set;
    set.name = m.name;
    set.d_field = m.d_field;
    set.generator = m.generator;
    set.gen_seed = m.seed;

    const auto coords = load_array(dir / m.coords_file, m.n_dof * m.d);
    set.points = DenseMatrix(m.n_dof, m.d);
    std::copy(coords.begin(), coords.end(), set.points.data());

    const auto params = load_array(dir / m.params_file, m.n_mu * m.d_mu);
    set.params = DenseMatrix(m.n_mu, m.d_mu);
    std::copy(params.begin(), params.end(), set.params.data());

    const std::size_t field_len = m.n_dof * m.d_field;
    const auto flat = load_array(dir / m.snapshots_file, m.n_mu * field_len);
    set.fields.assign(m.n_mu, std::vector<double>(field_len));
    for (std::size_t j = 0; j < m.n_mu; ++j)
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(j * field_len),
                  flat.begin() + static_cast<std::ptrdiff_t>((j + 1) * field_len),
                  set.fields[j].begin());

    set.validate();
    return set;
}

std::pair<SnapshotSet, SnapshotSet> split(const SnapshotSet& set, double train_fraction,
                                          std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidInput("split: train_fraction must lie in (0, 1)");
    set.validate();
    const std::size_t n = set.n_mu();
    if (n < 2) throw InvalidInput("split: need at least two snapshots");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = Rng::derive(seed, 0x5b117ULL);
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.uniform_index(i + 1)]);

    std::size_t n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(n) + 0.5));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::vector<std::size_t> train_idx(idx.begin(), idx.begin() + n_train);
    std::vector<std::size_t> test_idx(idx.begin() + n_train, idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    auto take = [&](const std::vector<std::size_t>& which) {
        SnapshotSet out;
        out.name = set.name;
        out.d_field = set.d_field;
        out.generator = set.generator;
        out.gen_seed = set.gen_seed;
        out.points = set.points;
        out.params = DenseMatrix(which.size(), set.d_mu());
        out.fields.reserve(which.size());
        for (std::size_t row = 0; row < which.size(); ++row) {
            for (std::size_t c = 0; c < set.d_mu(); ++c)
                out.params(row, c) = set.params(which[row], c);
            out.fields.push_back(set.fields[which[row]]);
        }
        return out;
    };
    return {take(train_idx), take(test_idx)};
}

void save_matrix(const DenseMatrix& m, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "quadrom-matrix v1\nrows " << m.rows() << "\ncols " << m.cols() << "\ndata\n";
    write_doubles_le(out, m.entries());
    if (!out) throw IoError("write failed: " + path.string());
}

DenseMatrix load_matrix(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string magic, key;
    std::getline(in, magic);
    if (magic != "quadrom-matrix v1") throw CorruptDataset("bad matrix header: " + path.string());
    std::size_t rows = 0, cols = 0;
    in >> key >> rows;
    if (key != "rows") throw CorruptDataset("bad matrix header: " + path.string());
    in >> key >> cols;
    if (key != "cols") throw CorruptDataset("bad matrix header: " + path.string());
    in >> key;
    if (key != "data") throw CorruptDataset("bad matrix header: " + path.string());
    in.get();  // newline after "data"
    DenseMatrix m(rows, cols);
    const auto values = read_doubles_le(in, rows * cols);
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

}  // namespace quadrom
