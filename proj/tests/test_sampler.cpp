#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "quadrom/errors.hpp"
#include "quadrom/sampler.hpp"

using namespace quadrom;

TEST_CASE("node_probabilities is uniform for equal corrections") {
    const std::vector<std::vector<double>> corr(3, std::vector<double>(8, 0.25));
    const NodeDistribution dist = node_probabilities(corr, 1e-3);
    for (double p : dist.probabilities)
        CHECK(std::abs(p - 0.125) <= 1e-15);
    double sum = 0.0;
    for (double p : dist.probabilities) sum += p;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("node_probabilities concentrates on the active node as epsilon shrinks") {
    const std::vector<std::vector<double>> corr = {{1.0, 0.0}};
    const NodeDistribution dist = node_probabilities(corr, 1e-6);
    CHECK(dist.probabilities[0] > 1.0 - 1e-12);
    CHECK(dist.probabilities[1] < std::exp(-0.5 / 1e-6) * 2.0 + 1e-300);
}

TEST_CASE("node_probabilities matches the direct formula on 5 hand-picked nodes") {
    const std::vector<double> c = {0.3, 0.05, 0.8, 0.0, 0.42};
    std::vector<std::vector<double>> corr = {c};  // one snapshot, magnitudes = |c|
    const double eps = 1e-3;
    const NodeDistribution dist = node_probabilities(corr, eps);

    double c_bar = 0.0;
    for (double v : c) c_bar += v;
    c_bar /= 5.0;
    CHECK(dist.normalizer == doctest::Approx(c_bar).epsilon(1e-15));

    std::vector<double> expect(5);
    double total = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        expect[i] = std::exp(-c_bar / (c[i] + eps));
        total += expect[i];
    }
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(dist.probabilities[i] == doctest::Approx(expect[i] / total).epsilon(1e-15));
}

TEST_CASE("node_probabilities handles vector fields and the max normalizer") {
    // Two nodes with components (3,4) and (0,0): magnitudes 5 and 0.
    const std::vector<std::vector<double>> corr = {{3.0, 4.0, 0.0, 0.0}};
    const NodeDistribution dist = node_probabilities(corr, 0.1, 2);
    CHECK(dist.mean_corrections[0] == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(dist.mean_corrections[1] == 0.0);

    const NodeDistribution dmax =
        node_probabilities(corr, 0.1, 2, CorrectionNormalizer::MaxCorrection);
    CHECK(dmax.normalizer == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("node_probabilities falls back to uniform for all-zero corrections") {
    const std::vector<std::vector<double>> corr(2, std::vector<double>(6, 0.0));
    const NodeDistribution dist = node_probabilities(corr, 1e-6);
    for (double p : dist.probabilities) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    CHECK(default_epsilon(corr) == 1.0);
}

TEST_CASE("probabilities are monotone in the mean correction") {
    Rng rng(3);
    std::vector<double> c(20);
    for (double& v : c) v = rng.uniform(0.0, 2.0);
    const NodeDistribution dist = node_probabilities({c}, 1e-4);
    for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = 0; j < c.size(); ++j)
            if (c[i] > c[j]) CHECK(dist.probabilities[i] > dist.probabilities[j]);
}

TEST_CASE("distribution tends to uniform as epsilon grows") {
    const std::vector<double> c = {0.1, 0.9, 0.4, 0.02, 0.7};
    const double eps = 1e6 * 0.9;
    const NodeDistribution dist = node_probabilities({c}, eps);
    for (double p : dist.probabilities) CHECK(std::abs(p - 0.2) <= 1e-4);
}

TEST_CASE("sample_nodes basics") {
    const std::vector<std::vector<double>> corr(1, std::vector<double>{1, 2, 3, 4, 5, 6});
    const NodeDistribution dist = node_probabilities(corr, 1e-2);

    const std::vector<std::size_t> all = sample_nodes(dist, 1.0, 7);
    REQUIRE(all.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(all[i] == i);

    const std::vector<std::size_t> some = sample_nodes(dist, 0.5, 7);
    CHECK(some.size() == 3);
    const std::vector<std::size_t> again = sample_nodes(dist, 0.5, 7);
    CHECK(some == again);
    const std::vector<std::size_t> other = sample_nodes(dist, 0.5, 8);
    CHECK(other.size() == 3);

    CHECK_THROWS_AS(sample_nodes(dist, 0.0, 1), InvalidInput);
    CHECK_THROWS_AS(sample_nodes(dist, 1.5, 1), InvalidInput);
}

TEST_CASE("zero-probability nodes are never drawn while mass remains") {
    NodeDistribution dist;
    dist.probabilities = {0.5, 0.0, 0.3, 0.0, 0.2};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const std::vector<std::size_t> chosen = sample_nodes(dist, 0.6, seed);  // 3 nodes
        REQUIRE(chosen.size() == 3);
        CHECK(chosen == std::vector<std::size_t>{0, 2, 4});
    }
}

TEST_CASE("uniform sampling inclusion frequencies stay inside binomial bounds") {
    const std::size_t n = 10;
    NodeDistribution dist;
    dist.probabilities.assign(n, 1.0 / n);
    const std::size_t reps = 10000;
    std::vector<std::size_t> hits(n, 0);
    for (std::size_t rep = 0; rep < reps; ++rep)
        for (std::size_t idx : sample_nodes(dist, 0.5, 1000 + rep)) ++hits[idx];
    const double p = 0.5;
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(reps));
    for (std::size_t i = 0; i < n; ++i) {
        const double freq = static_cast<double>(hits[i]) / static_cast<double>(reps);
        CHECK(std::abs(freq - p) <= 3.0 * sigma);
    }
}
