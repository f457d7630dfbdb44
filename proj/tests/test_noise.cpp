#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "stvf/noise.hpp"

using namespace stvf;

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

Moments moments(const std::vector<double>& xs)
{
    CompensatedSum s;
    for (double x : xs) {
        s.add(x);
    }
    const double mean = s.value() / static_cast<double>(xs.size());
    CompensatedSum q;
    for (double x : xs) {
        q.add((x - mean) * (x - mean));
    }
    return {mean, q.value() / static_cast<double>(xs.size() - 1)};
}

std::vector<double> interior_draws(const WienerPath& path, const Mesh& mesh)
{
    std::vector<double> out;
    for (Index i = 1; i <= path.n_steps; ++i) {
        const auto inc = path.nodal_increment(i);
        for (Index l = 0; l < mesh.num_nodes(); ++l) {
            if (!mesh.is_boundary(l)) {
                out.push_back(inc[l]);
            }
        }
    }
    return out;
}

std::vector<double> random_nodal(Index n, unsigned seed)
{
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) {
        x = dist(gen);
    }
    return v;
}

}  // namespace

TEST(NoiseKind, NamesRoundTrip)
{
    for (NoiseKind k : {NoiseKind::scalar_linear, NoiseKind::tracking, NoiseKind::gradient, NoiseKind::additive}) {
        EXPECT_EQ(parse_noise_kind(to_string(k)), k);
    }
    EXPECT_EQ(to_string(NoiseKind::scalar_linear), "linear");
    EXPECT_THROW((void)parse_noise_kind("brownian"), std::invalid_argument);
}

TEST(Rng, SameSeedSameStream)
{
    Rng a(123);
    Rng b(123);
    for (int i = 0; i < 1000; ++i) {
        ASSERT_EQ(a.normal(), b.normal());
    }
}

TEST(Rng, UniformsStayInsideOpenInterval)
{
    Rng r(5);
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform01();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
}

TEST(Rng, BoxMullerReturnsCosineThenSine)
{
    // Engine seeded the same way, by hand.
    const std::uint64_t seed = 77;
    std::uint64_t s = seed;
    std::array<std::uint32_t, 8> words{};
    for (std::size_t i = 0; i < words.size(); i += 2) {
        const std::uint64_t v = splitmix64(s);
        words[i] = static_cast<std::uint32_t>(v);
        words[i + 1] = static_cast<std::uint32_t>(v >> 32);
    }
    std::seed_seq seq(words.begin(), words.end());
    std::mt19937_64 engine(seq);
    auto u = [&engine] { return (static_cast<double>(engine() >> 11) + 0.5) / 9007199254740992.0; };

    Rng rng(seed);
    for (int pair = 0; pair < 50; ++pair) {
        const double u1 = u();
        const double u2 = u();
        const double r = std::sqrt(-2.0 * std::log(u1));
        EXPECT_EQ(rng.normal(), r * std::cos(2.0 * std::numbers::pi * u2));
        EXPECT_EQ(rng.normal(), r * std::sin(2.0 * std::numbers::pi * u2));
    }
}

TEST(DeriveSeed, DistinctAcrossIndices)
{
    std::vector<std::uint64_t> seen;
    for (std::uint64_t i = 0; i < 1000; ++i) {
        seen.push_back(derive_seed(42, i));
    }
    std::sort(seen.begin(), seen.end());
    EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());
    EXPECT_NE(derive_seed(0, 0), derive_seed(1, 0));
    EXPECT_EQ(derive_seed(9, 3), derive_seed(9, 3));
}

TEST(SamplePath, DeterministicInSeed)
{
    const Mesh mesh = build_unit_square_mesh(4);
    const auto a = sample_path(3, 20, mesh.boundary_mask(), NoiseKind::tracking, 0.01);
    const auto b = sample_path(3, 20, mesh.boundary_mask(), NoiseKind::tracking, 0.01);
    const auto c = sample_path(4, 20, mesh.boundary_mask(), NoiseKind::tracking, 0.01);
    EXPECT_EQ(a.increments, b.increments);
    EXPECT_EQ(a.checksum(), b.checksum());
    EXPECT_NE(a.checksum(), c.checksum());
}

TEST(SamplePath, BoundaryRowsAreExactZeros)
{
    const Mesh mesh = build_unit_square_mesh(5);
    const auto p = sample_path(1, 10, mesh.boundary_mask(), NoiseKind::gradient, 0.1);
    for (Index i = 1; i <= p.n_steps; ++i) {
        const auto inc = p.nodal_increment(i);
        for (Index l = 0; l < mesh.num_nodes(); ++l) {
            if (mesh.is_boundary(l)) {
                ASSERT_EQ(inc[l], 0.0);
            } else {
                ASSERT_NE(inc[l], 0.0);
            }
        }
    }
}

TEST(SamplePath, ShapeAndRangeChecks)
{
    const auto s = sample_path(1, 5, 9, NoiseKind::scalar_linear, 0.1);
    EXPECT_TRUE(s.scalar);
    EXPECT_EQ(s.increments.size(), 5u);
    EXPECT_THROW((void)s.scalar_increment(0), std::out_of_range);
    EXPECT_THROW((void)s.scalar_increment(6), std::out_of_range);
    EXPECT_THROW((void)s.nodal_increment(1), std::logic_error);
    EXPECT_THROW((void)sample_path(1, 0, 9, NoiseKind::additive, 0.1), std::invalid_argument);
    EXPECT_THROW((void)sample_path(1, 5, 9, NoiseKind::additive, 0.0), std::invalid_argument);
}

TEST(SamplePath, ScalarIncrementMoments)
{
    const double tau = 1e-4;
    const Index n = 100000;
    const auto p = sample_path(2024, n, 1, NoiseKind::scalar_linear, tau);
    const Moments m = moments(p.increments);
    const double sn = std::sqrt(static_cast<double>(n));
    EXPECT_LE(std::abs(m.mean), 5.0 * std::sqrt(tau) / sn);
    EXPECT_LE(std::abs(m.var - tau), 5.0 * tau * std::sqrt(2.0) / sn);
}

TEST(SamplePath, NodalIncrementMoments)
{
    const double tau = 1e-4;
    const Mesh mesh = build_unit_square_mesh(4);
    const auto p = sample_path(99, 11112, mesh.boundary_mask(), NoiseKind::additive, tau);
    const auto draws = interior_draws(p, mesh);
    ASSERT_EQ(draws.size(), 11112u * 9u);
    const Moments m = moments(draws);
    const double sn = std::sqrt(static_cast<double>(draws.size()));
    EXPECT_LE(std::abs(m.mean), 5.0 * std::sqrt(tau) / sn);
    EXPECT_LE(std::abs(m.var - tau), 5.0 * tau * std::sqrt(2.0) / sn);
}

TEST(SamplePath, DerivedStreamsAreUncorrelated)
{
    const Index n = 50000;
    const auto a = sample_path(derive_seed(7, 0), n, 1, NoiseKind::scalar_linear, 1.0);
    const auto b = sample_path(derive_seed(7, 1), n, 1, NoiseKind::scalar_linear, 1.0);
    const Moments ma = moments(a.increments);
    const Moments mb = moments(b.increments);
    CompensatedSum c;
    for (Index i = 0; i < n; ++i) {
        c.add((a.increments[i] - ma.mean) * (b.increments[i] - mb.mean));
    }
    const double corr = c.value() / static_cast<double>(n - 1) / std::sqrt(ma.var * mb.var);
    EXPECT_LE(std::abs(corr), 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST(NoiseLoad, AdditiveIsMassTimesIncrement)
{
    const FemSpace space(build_unit_square_mesh(4));
    const Mesh& mesh = space.mesh();
    const auto p = sample_path(8, 3, mesh.boundary_mask(), NoiseKind::additive, 0.01);
    const auto zero = FeFunction::zeros(mesh).values;
    const auto dense = oracle::to_dense(space.mass());
    const double mu = 0.6;
    for (Index step = 1; step <= 3; ++step) {
        const auto inc = p.nodal_increment(step);
        const auto ref = oracle::matvec(dense, std::vector<double>(inc.begin(), inc.end()));
        const auto b = noise_load(space, zero, zero, p, step, NoiseKind::additive, mu);
        for (Index l = 0; l < mesh.num_nodes(); ++l) {
            EXPECT_NEAR(b[l], mesh.is_boundary(l) ? 0.0 : mu * ref[l], 1e-15);
        }
    }
}

TEST(NoiseLoad, VanishesWhereMultiplierVanishes)
{
    const FemSpace space(build_unit_square_mesh(5));
    const Mesh& mesh = space.mesh();
    const auto zero = FeFunction::zeros(mesh).values;
    const auto g = random_nodal(mesh.num_nodes(), 3);
    const auto scalar = sample_path(1, 2, mesh.num_nodes(), NoiseKind::scalar_linear, 0.1);
    const auto nodal = sample_path(1, 2, mesh.boundary_mask(), NoiseKind::tracking, 0.1);
    const Vector expect(mesh.num_nodes(), 0.0);
    EXPECT_EQ(noise_load(space, zero, g, scalar, 1, NoiseKind::scalar_linear, 1.0), expect);
    EXPECT_EQ(noise_load(space, g, g, nodal, 2, NoiseKind::tracking, 1.0), expect);
    EXPECT_EQ(noise_load(space, zero, g, nodal, 1, NoiseKind::gradient, 1.0), expect);
}

TEST(NoiseLoad, ScalarLinearMatchesDenseMass)
{
    const FemSpace space(build_unit_square_mesh(4));
    const Mesh& mesh = space.mesh();
    const auto x = random_nodal(mesh.num_nodes(), 1);
    const auto p = sample_path(4, 2, mesh.num_nodes(), NoiseKind::scalar_linear, 0.1);
    const auto ref = oracle::matvec(oracle::to_dense(space.mass()), x);
    const auto b = noise_load(space, x, x, p, 2, NoiseKind::scalar_linear, 2.0);
    for (Index l = 0; l < mesh.num_nodes(); ++l) {
        const double e = mesh.is_boundary(l) ? 0.0 : 2.0 * p.scalar_increment(2) * ref[l];
        EXPECT_NEAR(b[l], e, 1e-15);
    }
}

TEST(NoiseLoad, LinearInMu)
{
    const FemSpace space(build_unit_square_mesh(4));
    const Mesh& mesh = space.mesh();
    const auto x = random_nodal(mesh.num_nodes(), 11);
    const auto g = random_nodal(mesh.num_nodes(), 12);
    for (NoiseKind kind : {NoiseKind::scalar_linear, NoiseKind::tracking, NoiseKind::gradient, NoiseKind::additive}) {
        const auto p = sample_path(5, 1, mesh.boundary_mask(), kind, 0.04);
        const auto b1 = noise_load(space, x, g, p, 1, kind, 1.0);
        const auto b3 = noise_load(space, x, g, p, 1, kind, 3.0);
        for (Index l = 0; l < b1.size(); ++l) {
            EXPECT_NEAR(b3[l], 3.0 * b1[l], 1e-14) << to_string(kind);
        }
    }
}

TEST(NoiseLoad, LinearInIncrements)
{
    const FemSpace space(build_unit_square_mesh(4));
    const Mesh& mesh = space.mesh();
    const auto x = random_nodal(mesh.num_nodes(), 21);
    const auto g = random_nodal(mesh.num_nodes(), 22);
    for (NoiseKind kind : {NoiseKind::scalar_linear, NoiseKind::tracking, NoiseKind::gradient, NoiseKind::additive}) {
        WienerPath p = sample_path(6, 1, mesh.boundary_mask(), kind, 0.04);
        const auto b1 = noise_load(space, x, g, p, 1, kind, 1.0);
        for (double& v : p.increments) {
            v *= -2.5;
        }
        const auto b2 = noise_load(space, x, g, p, 1, kind, 1.0);
        for (Index l = 0; l < b1.size(); ++l) {
            EXPECT_NEAR(b2[l], -2.5 * b1[l], 1e-14) << to_string(kind);
        }
    }
}

TEST(NoiseLoad, GradientNoiseMatchesElementwiseOracle)
{
    const FemSpace space(build_unit_square_mesh(3));
    const Mesh& mesh = space.mesh();
    const auto x = random_nodal(mesh.num_nodes(), 31);
    const auto p = sample_path(7, 1, mesh.boundary_mask(), NoiseKind::gradient, 0.01);
    const auto inc = p.nodal_increment(1);
    std::vector<double> ref(mesh.num_nodes(), 0.0);
    for (Index k = 0; k < mesh.num_elements(); ++k) {
        const auto c = oracle::corners(mesh, k);
        const auto& t = mesh.triangle(k);
        const auto gr = oracle::affine_gradient(c[0], c[1], c[2], x[t[0]], x[t[1]], x[t[2]]);
        const double sigma = std::hypot(gr.x, gr.y);
        const double area = oracle::tri_area(c[0], c[1], c[2]);
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                ref[t[a]] += 0.5 * sigma * area * (a == b ? 2.0 : 1.0) / 12.0 * inc[t[b]];
            }
        }
    }
    const auto b = noise_load(space, x, x, p, 1, NoiseKind::gradient, 0.5);
    for (Index l = 0; l < mesh.num_nodes(); ++l) {
        EXPECT_NEAR(b[l], mesh.is_boundary(l) ? 0.0 : ref[l], 1e-14);
    }
}

TEST(NoiseLoad, RejectsMismatchedPath)
{
    const FemSpace space(build_unit_square_mesh(3));
    const auto zero = FeFunction::zeros(space.mesh()).values;
    const auto scalar = sample_path(1, 1, 16, NoiseKind::scalar_linear, 0.1);
    EXPECT_THROW((void)noise_load(space, zero, zero, scalar, 1, NoiseKind::tracking, 1.0), std::invalid_argument);
    const auto small = sample_path(1, 1, 9, NoiseKind::tracking, 0.1);
    EXPECT_THROW((void)noise_load(space, zero, zero, small, 1, NoiseKind::tracking, 1.0), std::invalid_argument);
}
