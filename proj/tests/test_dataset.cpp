#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "quadrom/dataset.hpp"
#include "quadrom/errors.hpp"
#include "quadrom/quadls.hpp"

using namespace quadrom;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("quadrom_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("generate_synthetic is deterministic and finite") {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::GenericNonlinear;
    spec.nx = spec.ny = 8;
    spec.n_modes = 4;
    spec.n_mu = 12;
    spec.seed = 9;
    const SnapshotSet a = generate_synthetic(spec);
    const SnapshotSet b = generate_synthetic(spec);
    CHECK(a.points == b.points);
    CHECK(a.params == b.params);
    REQUIRE(a.fields.size() == b.fields.size());
    for (std::size_t j = 0; j < a.fields.size(); ++j) CHECK(a.fields[j] == b.fields[j]);
    for (const auto& f : a.fields)
        for (double v : f) CHECK(std::isfinite(v));
}

TEST_CASE("generated parameters are equispaced in range") {
    SyntheticSpec spec;
    spec.nx = spec.ny = 6;
    spec.n_modes = 2;
    spec.n_mu = 15;
    spec.mu_lo = 2.0;
    spec.mu_hi = 5.0;
    const SnapshotSet set = generate_synthetic(spec);
    const double step = set.params(1, 0) - set.params(0, 0);
    for (std::size_t j = 1; j < set.n_mu(); ++j)
        CHECK(set.params(j, 0) - set.params(j - 1, 0) ==
              doctest::Approx(step).epsilon(1e-12));
    CHECK(set.params(0, 0) > spec.mu_lo);
    CHECK(set.params(set.n_mu() - 1, 0) < spec.mu_hi);
}

TEST_CASE("spatial modes are orthonormal: snapshot Gram matches latent Gram") {
    // For ExactQuadratic with K = r_lin the latents are the known odd
    // monomials, so <u_a, u_b> = sum_k g_k(mu_a) g_k(mu_b) exactly when the
    // spatial modes are orthonormal on the grid.
    SyntheticSpec spec;
    spec.kind = SyntheticKind::ExactQuadratic;
    spec.nx = spec.ny = 12;
    spec.n_modes = 3;
    spec.r_lin = 3;
    spec.n_mu = 7;
    spec.mu_lo = 1.0;
    spec.mu_hi = 3.0;
    const SnapshotSet set = generate_synthetic(spec);

    auto latent = [&](double mu, std::size_t k) {
        const double t = (2.0 * mu - spec.mu_lo - spec.mu_hi) / (spec.mu_hi - spec.mu_lo);
        return std::pow(t, static_cast<double>(2 * k + 1));
    };
    for (std::size_t a = 0; a < set.n_mu(); ++a) {
        for (std::size_t b = a; b < set.n_mu(); ++b) {
            const double inner = dot(set.fields[a], set.fields[b]);
            double ref = 0.0;
            for (std::size_t k = 0; k < 3; ++k)
                ref += latent(set.params(a, 0), k) * latent(set.params(b, 0), k);
            CHECK(inner == doctest::Approx(ref).epsilon(1e-10));
        }
    }
}

TEST_CASE("ExactQuadratic with K = r_lin leaves vanishing corrections") {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::ExactQuadratic;
    spec.nx = spec.ny = 10;
    spec.n_modes = 3;
    spec.r_lin = 3;
    spec.n_mu = 10;
    const SnapshotSet set = generate_synthetic(spec);
    const PodBasis basis = compute_pod(set, 3);
    for (const auto& u : set.fields) {
        const std::vector<double> tau =
            exact_correction(u, reconstruct(basis, project(basis, u)));
        CHECK(norm2(tau) <= 1e-10 * (1.0 + norm2(u)));
    }
}

TEST_CASE("ExactQuadratic corrections are exactly quadratic in the coefficients") {
    SyntheticSpec spec;
    spec.kind = SyntheticKind::ExactQuadratic;
    spec.nx = spec.ny = 16;
    spec.n_modes = 5;
    spec.r_lin = 3;
    spec.n_mu = 30;
    spec.seed = 4;
    const SnapshotSet set = generate_synthetic(spec);
    const PodBasis basis = compute_pod(set, 3);

    std::vector<std::vector<double>> coeffs, corrections;
    for (const auto& u : set.fields) {
        std::vector<double> a = project(basis, u);
        corrections.push_back(exact_correction(u, reconstruct(basis, a)));
        coeffs.push_back(std::move(a));
    }
    const QuadOperatorLS op = fit_quad_ls(corrections, coeffs);
    for (std::size_t j = 0; j < coeffs.size(); ++j) {
        const std::vector<double> fitted = eval_correction_ls(op, coeffs[j]);
        double num = 0.0;
        for (std::size_t i = 0; i < fitted.size(); ++i) {
            const double d = fitted[i] - corrections[j][i];
            num += d * d;
        }
        CHECK(std::sqrt(num) <= 1e-8 * norm2(corrections[j]));
    }
}

TEST_CASE("save and load round-trip bit-exactly") {
    SyntheticSpec spec;
    spec.nx = spec.ny = 6;
    spec.n_modes = 3;
    spec.n_mu = 8;
    spec.seed = 21;
    spec.name = "roundtrip";
    const SnapshotSet set = generate_synthetic(spec);
    const fs::path dir = temp_dir("roundtrip");
    const fs::path manifest = save_dataset(set, dir);
    const SnapshotSet loaded = load_dataset(manifest);
    CHECK(loaded.points == set.points);
    CHECK(loaded.params == set.params);
    REQUIRE(loaded.fields.size() == set.fields.size());
    for (std::size_t j = 0; j < set.fields.size(); ++j)
        CHECK(loaded.fields[j] == set.fields[j]);
    CHECK(loaded.d_field == set.d_field);
    CHECK(loaded.generator == set.generator);
    fs::remove_all(dir);
}

TEST_CASE("manifest shape mismatch raises CorruptDataset, missing file IoError") {
    SyntheticSpec spec;
    spec.nx = spec.ny = 6;
    spec.n_modes = 2;
    spec.n_mu = 5;
    const SnapshotSet set = generate_synthetic(spec);
    const fs::path dir = temp_dir("corrupt");
    const fs::path manifest = save_dataset(set, dir);

    // Shrink the coordinate file below the declared n_dof.
    {
        std::ofstream out(dir / "coords.bin", std::ios::binary | std::ios::trunc);
        std::vector<char> bytes((set.n_dof() - 1) * 2 * 8, 0);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(load_dataset(manifest), CorruptDataset);

    fs::remove(dir / "coords.bin");
    CHECK_THROWS_AS(load_dataset(manifest), IoError);
    CHECK_THROWS_AS(load_dataset(dir / "nope.txt"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("csv arrays are accepted on input") {
    const fs::path dir = temp_dir("csv");
    {
        std::ofstream coords(dir / "coords.csv");
        coords << "0.0,0.0\n1.0,0.0\n0.0,1.0\n1.0,1.0\n";
        std::ofstream params(dir / "params.csv");
        params << "0.25\n0.75\n";
        std::ofstream snaps(dir / "snapshots.csv");
        snaps << "1,2,3,4\n5,6,7,8\n";
        std::ofstream manifest(dir / "manifest.txt");
        manifest << "name csvcase\nd 2\nd_field 1\nd_mu 1\nn_dof 4\nn_mu 2\n"
                 << "coords_file coords.csv\nparams_file params.csv\n"
                 << "snapshots_file snapshots.csv\n";
    }
    const SnapshotSet set = load_dataset(dir / "manifest.txt");
    CHECK(set.n_dof() == 4);
    CHECK(set.n_mu() == 2);
    CHECK(set.fields[1][2] == 7.0);
    fs::remove_all(dir);
}

TEST_CASE("split honors the fraction, is exhaustive and seed-stable") {
    SnapshotSet set;
    set.points = DenseMatrix::from_rows({{0.0, 0.0}, {1.0, 1.0}, {2.0, 0.5}, {0.5, 2.0}});
    const std::size_t n = 500;
    set.params = DenseMatrix(n, 1);
    for (std::size_t j = 0; j < n; ++j) set.params(j, 0) = static_cast<double>(j);
    set.d_field = 1;
    set.fields.assign(n, std::vector<double>(4, 1.0));
    for (std::size_t j = 0; j < n; ++j) set.fields[j][0] = static_cast<double>(j);

    const auto [train, test] = split(set, 0.8, 42);
    CHECK(train.n_mu() == 400);
    CHECK(test.n_mu() == 100);

    std::vector<bool> seen(n, false);
    auto mark = [&](const SnapshotSet& part) {
        for (std::size_t j = 0; j < part.n_mu(); ++j) {
            const auto idx = static_cast<std::size_t>(part.params(j, 0));
            CHECK(!seen[idx]);
            seen[idx] = true;
            CHECK(part.fields[j][0] == part.params(j, 0));
        }
    };
    mark(train);
    mark(test);
    for (bool s : seen) CHECK(s);

    const auto [train2, test2] = split(set, 0.8, 42);
    CHECK(train2.params == train.params);
    CHECK(test2.params == test.params);

    CHECK_THROWS_AS(split(set, 0.0, 1), InvalidInput);
    CHECK_THROWS_AS(split(set, 1.0, 1), InvalidInput);
}

TEST_CASE("matrix container round-trips") {
    const DenseMatrix m = oracles::random_matrix(7, 3, 31);
    const fs::path dir = temp_dir("matrix");
    save_matrix(m, dir / "m.qmat");
    const DenseMatrix loaded = load_matrix(dir / "m.qmat");
    CHECK(loaded == m);
    fs::remove_all(dir);
}

TEST_CASE("generate_synthetic validates its spec") {
    SyntheticSpec spec;
    spec.nx = 3;
    CHECK_THROWS_AS(generate_synthetic(spec), InvalidInput);
    spec.nx = 8;
    spec.ny = 8;
    spec.kind = SyntheticKind::ExactQuadratic;
    spec.r_lin = 9;
    spec.n_modes = 5;
    CHECK_THROWS_AS(generate_synthetic(spec), InvalidInput);
    spec.r_lin = 2;
    spec.mu_lo = 1.0;
    spec.mu_hi = 1.0;
    CHECK_THROWS_AS(generate_synthetic(spec), InvalidInput);
}
