#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "stvf/fem.hpp"
#include "stvf/noise.hpp"
#include "stvf/property_suite.hpp"

using namespace stvf;

namespace {

Mesh reference_triangle()
{
    return Mesh({{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, {{0, 1, 2}}, {true, true, true});
}

FeFunction random_field(const Mesh& mesh, unsigned seed, bool zero_trace = true)
{
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    FeFunction u = FeFunction::zeros(mesh, zero_trace ? Space::zero_trace : Space::whole);
    for (Index l = 0; l < mesh.num_nodes(); ++l) {
        if (!zero_trace || !mesh.is_boundary(l)) {
            u.values[l] = dist(gen);
        }
    }
    return u;
}

/// b_l = sum_K |K| grad u / sqrt(|grad u|^2 + eps^2) . grad phi_l, every gradient
/// recomputed from node coordinates.
std::vector<double> brute_force_tv_load(const Mesh& mesh, const std::vector<double>& u, double eps)
{
    std::vector<double> b(mesh.num_nodes(), 0.0);
    for (Index k = 0; k < mesh.num_elements(); ++k) {
        const auto p = oracle::corners(mesh, k);
        const auto& t = mesh.triangle(k);
        const auto gu = oracle::affine_gradient(p[0], p[1], p[2], u[t[0]], u[t[1]], u[t[2]]);
        const double c = 1.0 / std::sqrt(gu.x * gu.x + gu.y * gu.y + eps * eps);
        const double area = oracle::tri_area(p[0], p[1], p[2]);
        for (int a = 0; a < 3; ++a) {
            const auto gp = oracle::affine_gradient(p[0], p[1], p[2], a == 0, a == 1, a == 2);
            b[t[a]] += area * c * (gu.x * gp.x + gu.y * gp.y);
        }
    }
    for (Index l = 0; l < mesh.num_nodes(); ++l) {
        if (mesh.is_boundary(l)) {
            b[l] = 0.0;
        }
    }
    return b;
}

struct CentreNodeEntries {
    double mass = 0.0;
    double stiffness = 0.0;
};

/// Diagonal mass and stiffness entries of the single interior node of the n = 2 mesh.
CentreNodeEntries centre_entries(const Mesh& mesh, Index centre)
{
    CentreNodeEntries e;
    for (Index k = 0; k < mesh.num_elements(); ++k) {
        const auto& t = mesh.triangle(k);
        for (int a = 0; a < 3; ++a) {
            if (t[a] != centre) {
                continue;
            }
            const auto p = oracle::corners(mesh, k);
            const double area = oracle::tri_area(p[0], p[1], p[2]);
            const auto gp = oracle::affine_gradient(p[0], p[1], p[2], a == 0, a == 1, a == 2);
            e.mass += 2.0 * area / 12.0;
            e.stiffness += area * (gp.x * gp.x + gp.y * gp.y);
        }
    }
    return e;
}

}  // namespace

TEST(ElementMatrices, ReferenceTriangleMass)
{
    const Mesh ref = reference_triangle();
    const ElementMatrix m = element_mass_matrix(ref.area(0));
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            EXPECT_NEAR(m[i][j], (i == j ? 2.0 : 1.0) / 24.0, 1e-15);
        }
    }
}

TEST(ElementMatrices, ReferenceTriangleStiffness)
{
    const Mesh ref = reference_triangle();
    const ElementMatrix a = element_stiffness_matrix(ref, 0);
    const double expected[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            EXPECT_NEAR(a[i][j], expected[i][j], 1e-15);
        }
    }
}

TEST(Assembly, MassEntriesSumToArea)
{
    const CsrMatrix m = assemble_mass(build_unit_square_mesh(16));
    CompensatedSum s;
    for (double v : m.values()) {
        s.add(v);
    }
    EXPECT_NEAR(s.value(), 1.0, 1e-13);
    const std::vector<double> ones(m.n_rows(), 1.0);
    EXPECT_NEAR(dot(ones, spmv(m, ones)), 1.0, 1e-13);
}

TEST(Assembly, StiffnessAnnihilatesConstants)
{
    const CsrMatrix a = assemble_stiffness(build_unit_square_mesh(16));
    for (double v : spmv(a, std::vector<double>(a.n_rows(), 1.0))) {
        EXPECT_LE(std::abs(v), 1e-13);
    }
}

TEST(Assembly, StiffnessIsSemidefinite)
{
    const Mesh mesh = build_unit_square_mesh(6);
    const CsrMatrix a = assemble_stiffness(mesh);
    for (unsigned s = 0; s < 100; ++s) {
        const FeFunction x = random_field(mesh, s, false);
        EXPECT_GE(dot(x.values, spmv(a, x.values)), -1e-14);
    }
}

TEST(Assembly, MatchesDenseElementSum)
{
    const Mesh mesh = build_unit_square_mesh(3);
    oracle::Dense mass(mesh.num_nodes(), std::vector<double>(mesh.num_nodes(), 0.0));
    oracle::Dense stiff = mass;
    for (Index k = 0; k < mesh.num_elements(); ++k) {
        const auto p = oracle::corners(mesh, k);
        const auto& t = mesh.triangle(k);
        const double area = oracle::tri_area(p[0], p[1], p[2]);
        for (int a = 0; a < 3; ++a) {
            const auto ga = oracle::affine_gradient(p[0], p[1], p[2], a == 0, a == 1, a == 2);
            for (int b = 0; b < 3; ++b) {
                const auto gb = oracle::affine_gradient(p[0], p[1], p[2], b == 0, b == 1, b == 2);
                mass[t[a]][t[b]] += area * (a == b ? 2.0 : 1.0) / 12.0;
                stiff[t[a]][t[b]] += area * (ga.x * gb.x + ga.y * gb.y);
            }
        }
    }
    const auto m = oracle::to_dense(assemble_mass(mesh));
    const auto s = oracle::to_dense(assemble_stiffness(mesh));
    for (Index i = 0; i < mesh.num_nodes(); ++i) {
        for (Index j = 0; j < mesh.num_nodes(); ++j) {
            EXPECT_NEAR(m[i][j], mass[i][j], 1e-15);
            EXPECT_NEAR(s[i][j], stiff[i][j], 1e-13);
        }
    }
}

TEST(FemSpace, WeightedStiffnessWithUnitWeightsIsFreeStiffness)
{
    const FemSpace space(build_unit_square_mesh(5));
    const std::vector<double> ones(space.mesh().num_elements(), 1.0);
    const CsrMatrix w = space.weighted_free_stiffness(ones);
    const auto ref = space.free_stiffness().values();
    ASSERT_EQ(w.nnz(), ref.size());
    for (Index i = 0; i < ref.size(); ++i) {
        EXPECT_NEAR(w.values()[i], ref[i], 1e-14);
    }
}

TEST(ElementGradient, SimpleFields)
{
    const Mesh mesh = build_unit_square_mesh(4);
    const FeFunction zero = FeFunction::zeros(mesh);
    const FeFunction x = interpolate([](double x, double) { return x; }, mesh, false);
    const FeFunction xy = interpolate([](double x, double y) { return x + 2.0 * y; }, mesh, false);
    for (Index k = 0; k < mesh.num_elements(); ++k) {
        const Point2 g0 = element_gradient(mesh, zero.values, k);
        EXPECT_EQ(g0.x, 0.0);
        EXPECT_EQ(g0.y, 0.0);
        const Point2 g1 = element_gradient(mesh, x.values, k);
        EXPECT_NEAR(g1.x, 1.0, 1e-14);
        EXPECT_NEAR(g1.y, 0.0, 1e-14);
        const Point2 g2 = element_gradient(mesh, xy.values, k);
        EXPECT_NEAR(g2.x, 1.0, 1e-13);
        EXPECT_NEAR(g2.y, 2.0, 1e-13);
    }
}

TEST(TvOperatorLoad, ZeroFieldGivesZero)
{
    const Mesh mesh = build_unit_square_mesh(4);
    const auto b = tv_operator_load(mesh, FeFunction::zeros(mesh).values, 0.1);
    EXPECT_EQ(b, std::vector<double>(mesh.num_nodes(), 0.0));
}

TEST(TvOperatorLoad, PairingWithFieldMatchesGradientSum)
{
    const Mesh mesh = build_unit_square_mesh(6);
    for (unsigned s = 0; s < 20; ++s) {
        const FeFunction u = random_field(mesh, s);
        const double eps = 0.05;
        const auto b = tv_operator_load(mesh, u.values, eps);
        CompensatedSum expected;
        for (Index k = 0; k < mesh.num_elements(); ++k) {
            const Point2 g = element_gradient(mesh, u.values, k);
            const double g2 = g.x * g.x + g.y * g.y;
            expected.add(mesh.area(k) * g2 / std::sqrt(g2 + eps * eps));
        }
        const double pairing = dot(b, u.values);
        EXPECT_GE(pairing, 0.0);
        EXPECT_NEAR(pairing, expected.value(), 1e-12 * (1.0 + expected.value()));
    }
}

TEST(TvOperatorLoad, SingleInteriorNodeMatchesBruteForce)
{
    const Mesh mesh = build_unit_square_mesh(2);
    FeFunction u = FeFunction::zeros(mesh);
    u.values[4] = 1.0;
    for (double eps : {1.0, 1.0 / 32.0, 1e-3}) {
        const auto b = tv_operator_load(mesh, u.values, eps);
        const auto ref = brute_force_tv_load(mesh, u.values, eps);
        for (Index l = 0; l < mesh.num_nodes(); ++l) {
            EXPECT_NEAR(b[l], ref[l], 1e-14) << "node " << l << " eps " << eps;
        }
    }
}

TEST(TvOperatorLoad, RandomFieldMatchesBruteForce)
{
    const Mesh mesh = build_unit_square_mesh(5);
    const FeFunction u = random_field(mesh, 42);
    const auto b = tv_operator_load(mesh, u.values, 0.01);
    const auto ref = brute_force_tv_load(mesh, u.values, 0.01);
    for (Index l = 0; l < mesh.num_nodes(); ++l) {
        EXPECT_NEAR(b[l], ref[l], 1e-13);
    }
}

TEST(TvOperatorLoad, ZeroEpsOnFlatElementIsRejected)
{
    const Mesh mesh = build_unit_square_mesh(4);
    EXPECT_THROW((void)tv_operator_load(mesh, FeFunction::zeros(mesh).values, 0.0), std::domain_error);
}

TEST(DiscreteLaplacian, ZeroField)
{
    const FemSpace space(build_unit_square_mesh(4));
    const FeFunction w = discrete_laplacian(space, FeFunction::zeros(space.mesh()));
    EXPECT_EQ(w.values, std::vector<double>(space.mesh().num_nodes(), 0.0));
}

TEST(DiscreteLaplacian, SingleInteriorNodeDenseFormula)
{
    const FemSpace space(build_unit_square_mesh(2));
    FeFunction u = FeFunction::zeros(space.mesh());
    u.values[4] = 0.75;
    const CentreNodeEntries e = centre_entries(space.mesh(), 4);
    const FeFunction w = discrete_laplacian(space, u);
    EXPECT_NEAR(w[4], -e.stiffness * 0.75 / e.mass, 1e-12);
    for (Index l = 0; l < 9; ++l) {
        if (l != 4) {
            EXPECT_EQ(w[l], 0.0);
        }
    }
}

TEST(DiscreteLaplacian, PairingIsMinusDirichletEnergy)
{
    const FemSpace space(build_unit_square_mesh(8));
    for (unsigned s = 0; s < 10; ++s) {
        const FeFunction u = random_field(space.mesh(), s);
        const FeFunction w = discrete_laplacian(space, u);
        const double lhs = space.mass_inner(w.values, u.values);
        const double rhs = -space.grad_norm_sq(u.values);
        EXPECT_LE(lhs, 0.0);
        EXPECT_NEAR(lhs, rhs, 1e-9 * (1.0 + std::abs(rhs)));
    }
}

TEST(DiscreteLaplacian, RequiresZeroTrace)
{
    const FemSpace space(build_unit_square_mesh(4));
    const FeFunction u = interpolate([](double, double) { return 1.0; }, space.mesh(), false);
    EXPECT_THROW((void)discrete_laplacian(space, u), std::invalid_argument);
}

TEST(CheckPositivity, ZeroField)
{
    const FemSpace space(build_unit_square_mesh(4));
    EXPECT_EQ(check_positivity(space, FeFunction::zeros(space.mesh()), 0.1), 0.0);
}

TEST(CheckPositivity, SingleInteriorNodeDenseEnumeration)
{
    const FemSpace space(build_unit_square_mesh(2));
    const Mesh& mesh = space.mesh();
    const double a = 1.3;
    FeFunction u = FeFunction::zeros(mesh);
    u.values[4] = a;
    const CentreNodeEntries e = centre_entries(mesh, 4);
    const double b = -e.stiffness * a / e.mass;  // Delta_h u = b phi_c
    for (double eps : {1.0, 1.0 / 32.0, 1e-3}) {
        double q = 0.0;
        for (Index k = 0; k < mesh.num_elements(); ++k) {
            const auto& t = mesh.triangle(k);
            for (int i = 0; i < 3; ++i) {
                if (t[i] != 4) {
                    continue;
                }
                const auto p = oracle::corners(mesh, k);
                const auto gp = oracle::affine_gradient(p[0], p[1], p[2], i == 0, i == 1, i == 2);
                const double g2 = gp.x * gp.x + gp.y * gp.y;
                const double c = 1.0 / std::sqrt(a * a * g2 + eps * eps);
                q -= oracle::tri_area(p[0], p[1], p[2]) * c * a * b * g2;
            }
        }
        EXPECT_GT(q, 0.0);
        EXPECT_NEAR(check_positivity(space, u, eps), q, 1e-12 * (1.0 + q));
    }
}

TEST(Energy, ZeroFieldZeroData)
{
    const FemSpace space(build_unit_square_mesh(8));
    const auto zero = FeFunction::zeros(space.mesh()).values;
    const EnergyBreakdown e = energy(space, zero, zero, 0.125, 200.0);
    EXPECT_NEAR(e.total, 0.125, 1e-15);
    EXPECT_EQ(e.tv, 0.0);
    EXPECT_EQ(e.fidelity, 0.0);
}

TEST(Energy, ZeroFieldGeneralData)
{
    const FemSpace space(build_unit_square_mesh(6));
    const FeFunction g = random_field(space.mesh(), 5, false);
    const auto zero = FeFunction::zeros(space.mesh()).values;
    const double lambda = 200.0;
    const double eps = 1.0 / 32.0;
    const auto dense = oracle::to_dense(assemble_mass(space.mesh()));
    const double gmg = dot(g.values, oracle::matvec(dense, g.values));
    const EnergyBreakdown e = energy(space, zero, g.values, eps, lambda);
    EXPECT_NEAR(e.total, eps + 0.5 * lambda * gmg, 1e-12);
}

TEST(Energy, ConstantGradientOnSubdomain)
{
    const FemSpace space(build_unit_square_mesh(4));
    const FeFunction u =
        interpolate([](double x, double) { return std::max(0.0, x - 0.5); }, space.mesh(), false);
    const double eps = 0.2;
    const EnergyBreakdown e = energy(space, u.values, u.values, eps, 1.0);
    EXPECT_NEAR(e.tv_eps, 0.5 * std::sqrt(1.0 + eps * eps) + 0.5 * eps, 1e-14);
    EXPECT_NEAR(e.tv, 0.5, 1e-14);
    EXPECT_EQ(e.fidelity, 0.0);
}

TEST(Energy, BreakdownInvariants)
{
    const FemSpace space(build_unit_square_mesh(8));
    for (unsigned s = 0; s < 20; ++s) {
        const FeFunction u = random_field(space.mesh(), s);
        const FeFunction g = random_field(space.mesh(), s + 100, false);
        const double eps = 0.03;
        const EnergyBreakdown e = energy(space, u.values, g.values, eps, 50.0);
        EXPECT_GE(e.tv_eps, std::max(e.tv, eps) - 1e-15);
        EXPECT_NEAR(e.total, e.tv_eps + e.fidelity, 1e-13 * (1.0 + e.total));
    }
}

TEST(L2Project, OwnSpaceIsIdentity)
{
    const FemSpace space(build_unit_square_mesh(6));
    const FeFunction u = random_field(space.mesh(), 9, false);
    const FeFunction p = l2_project(space, u.values, Space::whole);
    for (Index l = 0; l < u.size(); ++l) {
        EXPECT_NEAR(p[l], u[l], 1e-11);
    }
    const FeFunction v = random_field(space.mesh(), 10);
    const FeFunction q = l2_project(space, v.values, Space::zero_trace);
    for (Index l = 0; l < v.size(); ++l) {
        EXPECT_NEAR(q[l], v[l], 1e-11);
    }
}

TEST(L2Project, ZeroIsZero)
{
    const FemSpace space(build_unit_square_mesh(4));
    const Mesh fine = build_unit_square_mesh(8);
    const FeFunction p = l2_project(space, fine, FeFunction::zeros(fine).values);
    EXPECT_EQ(p.values, std::vector<double>(space.mesh().num_nodes(), 0.0));
}

class NestedProjection : public ::testing::TestWithParam<Space> {};

TEST_P(NestedProjection, ResidualIsOrthogonalToTestFunctions)
{
    const Space target = GetParam();
    const FemSpace coarse(build_unit_square_mesh(2));
    const Mesh fine = build_unit_square_mesh(4);
    const FeFunction w = interpolate([](double x, double) { return x; }, fine, false);
    const FeFunction p = l2_project(coarse, fine, w.values, target);

    // (w - p, phi_l) on each fine triangle by the edge-midpoint rule, exact for quadratics.
    for (Index l = 0; l < coarse.mesh().num_nodes(); ++l) {
        if (target == Space::zero_trace && coarse.mesh().is_boundary(l)) {
            EXPECT_EQ(p[l], 0.0);
            continue;
        }
        std::vector<double> phi(coarse.mesh().num_nodes(), 0.0);
        phi[l] = 1.0;
        double residual = 0.0;
        for (Index k = 0; k < fine.num_elements(); ++k) {
            const auto c = oracle::corners(fine, k);
            const auto& t = fine.triangle(k);
            const double area = oracle::tri_area(c[0], c[1], c[2]);
            for (int a = 0; a < 3; ++a) {
                const int b = (a + 1) % 3;
                const oracle::Vec2 m{0.5 * (c[a].x + c[b].x), 0.5 * (c[a].y + c[b].y)};
                const double wm = 0.5 * (w[t[a]] + w[t[b]]);
                const double pm = oracle::evaluate_p1(coarse.mesh(), p.values, m);
                residual += area / 3.0 * (wm - pm) * oracle::evaluate_p1(coarse.mesh(), phi, m);
            }
        }
        EXPECT_LE(std::abs(residual), 1e-11) << "node " << l;
    }
}

INSTANTIATE_TEST_SUITE_P(Targets, NestedProjection, ::testing::Values(Space::whole, Space::zero_trace));

TEST(PropertySuite, SmallRunPasses)
{
    PropertySuiteOptions opt;
    opt.n = 8;
    opt.samples = 40;
    for (const PropertyOutcome& o : run_property_suite(opt)) {
        EXPECT_TRUE(o.passed) << o.name << ": " << o.detail;
        EXPECT_GT(o.checked, 0u);
    }
}

TEST(PropertySuite, DetectsSignFlippedOperator)
{
    PropertySuiteOptions opt;
    opt.n = 8;
    opt.samples = 40;
    opt.tv_load = [](const Mesh& mesh, std::span<const double> u, double eps) {
        Vector b = tv_operator_load(mesh, u, eps);
        for (double& v : b) {
            v = -v;
        }
        return b;
    };
    bool monotonicity_failed = false;
    for (const PropertyOutcome& o : run_property_suite(opt)) {
        if (o.name == "tv-monotonicity") {
            monotonicity_failed = !o.passed;
            EXPECT_TRUE(o.offending_seed.has_value());
        }
    }
    EXPECT_TRUE(monotonicity_failed);
}

TEST(PropertySuite, ZeroSamplesIsVacuous)
{
    PropertySuiteOptions opt;
    opt.n = 4;
    opt.samples = 0;
    for (const PropertyOutcome& o : run_property_suite(opt)) {
        EXPECT_TRUE(o.passed) << o.name;
    }
}
