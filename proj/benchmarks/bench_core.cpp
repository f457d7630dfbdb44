#include <benchmark/benchmark.h>

#include "stvf/fem.hpp"
#include "stvf/stepper.hpp"
#include "stvf/studies.hpp"

using namespace stvf;

static void BM_Spmv(benchmark::State& state)
{
    const CsrMatrix a = assemble_stiffness(build_unit_square_mesh(static_cast<Index>(state.range(0))));
    const Vector x(a.n_cols(), 1.0);
    Vector y(a.n_rows());
    for (auto _ : state) {
        spmv_into(a, x, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * a.nnz()));
}
BENCHMARK(BM_Spmv)->Arg(32)->Arg(64)->Arg(128);

static void BM_CgMassPlusStiffness(benchmark::State& state)
{
    const FemSpace space(build_unit_square_mesh(static_cast<Index>(state.range(0))));
    const CsrMatrix m = space.free_mass().combine(3.0, space.free_stiffness(), 1e-2);
    const Vector b(m.n_rows(), 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cg_solve(m, b).x.data());
    }
}
BENCHMARK(BM_CgMassPlusStiffness)->Arg(32)->Arg(64);

static void BM_TvLoad(benchmark::State& state)
{
    const Mesh mesh = build_unit_square_mesh(static_cast<Index>(state.range(0)));
    const NoisyImage img = make_noisy_image(mesh, 0.1, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(tv_operator_load(mesh, img.noisy.values, 1.0 / 32.0).data());
    }
}
BENCHMARK(BM_TvLoad)->Arg(32)->Arg(64)->Arg(128);

static void BM_ImplicitStep(benchmark::State& state)
{
    const FemSpace space(build_unit_square_mesh(static_cast<Index>(state.range(0))));
    const NoisyImage img = make_noisy_image(space.mesh(), 0.1, 1);
    SchemeParams p = baseline_config().params;
    const FeFunction x0 = FeFunction::zeros(space.mesh());
    const Vector noise(space.mesh().num_nodes(), 0.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(implicit_step(space, x0, noise, p, img.noisy.values).state.values.data());
    }
}
BENCHMARK(BM_ImplicitStep)->Arg(16)->Arg(32);

BENCHMARK_MAIN();
