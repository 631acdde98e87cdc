#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include "quadrom/pod.hpp"

namespace quadrom {

/// Plain-text manifest describing the on-disk layout of a dataset.
struct DatasetManifest {
    std::string name;
    std::size_t d = 2;
    std::size_t d_field = 1;
    std::size_t d_mu = 1;
    std::size_t n_dof = 0;
    std::size_t n_mu = 0;
    std::string coords_file;
    std::string params_file;
    std::string snapshots_file;
    std::string generator = "external";
    std::uint64_t seed = 0;

    static DatasetManifest read(const std::filesystem::path& path);
    void write(const std::filesystem::path& path) const;
};

enum class SyntheticKind { ExactQuadratic, GenericNonlinear };

SyntheticKind synthetic_kind_from_string(const std::string& name);
std::string to_string(SyntheticKind kind);

/// Recipe for a synthetic parametric field dataset on a uniform grid over
/// [0,1]^2. Fields are sums of K orthonormal spatial modes weighted by
/// parameter-dependent latent functions. ExactQuadratic ties the latents of
/// modes beyond `r_lin` to homogeneous quadratic combinations of the first
/// `r_lin`, so a rank-`r_lin` POD leaves a correction that is exactly
/// quadratic in the reduced coefficients. GenericNonlinear uses
/// g_k(mu) = sin(k pi (mu - lo) / (hi - lo)) / k instead.
struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::GenericNonlinear;
    std::size_t nx = 32;
    std::size_t ny = 32;
    std::size_t n_modes = 5;     // K
    std::size_t r_lin = 3;       // linear-manifold dimension (ExactQuadratic)
    double mu_lo = 0.0;
    double mu_hi = 1.0;
    std::size_t n_mu = 50;
    std::size_t d_field = 1;
    std::uint64_t seed = 0;
    std::string name = "synthetic";
};

/// Deterministic given the spec. The latent functions depend only on
/// (grid, K, r_lin, d_field, seed), never on n_mu, so datasets generated from
/// specs differing only in n_mu sample the same underlying field.
SnapshotSet generate_synthetic(const SyntheticSpec& spec);

/// Writes manifest.txt plus raw little-endian double arrays into `dir`;
/// returns the manifest path. Round-trips bit-exactly through load_dataset.
std::filesystem::path save_dataset(const SnapshotSet& set,
                                   const std::filesystem::path& dir);

SnapshotSet load_dataset(const std::filesystem::path& manifest_path);

/// Disjoint, exhaustive, seed-deterministic partition by shuffled snapshot
/// index. Indices inside each side are sorted ascending.
std::pair<SnapshotSet, SnapshotSet> split(const SnapshotSet& set,
                                          double train_fraction,
                                          std::uint64_t seed);

/// Single-file matrix container: text header (rows, cols) followed by the
/// entries as raw little-endian doubles.
void save_matrix(const DenseMatrix& m, const std::filesystem::path& path);
DenseMatrix load_matrix(const std::filesystem::path& path);

}  // namespace quadrom
