#include "stvf/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace stvf {

void SchemeParams::validate() const
{
    auto fail = [](const char* msg) { throw std::invalid_argument(msg); };
    if (!(T > 0.0)) fail("SchemeParams: T must be positive");
    if (N < 1) fail("SchemeParams: N must be at least 1");
    if (!(eps > 0.0)) fail("SchemeParams: eps must be positive");
    if (!(delta >= 0.0)) fail("SchemeParams: delta must be nonnegative");
    if (!(lambda >= 0.0)) fail("SchemeParams: lambda must be nonnegative");
    if (!(mu >= 0.0)) fail("SchemeParams: mu must be nonnegative");
    if (!(nu >= 0.0)) fail("SchemeParams: nu must be nonnegative");
    if (!(newton_tol > 0.0)) fail("SchemeParams: newton_tol must be positive");
    if (max_nonlinear_iters < 1) fail("SchemeParams: max_nonlinear_iters must be at least 1");
    if (thinning < 1) fail("SchemeParams: thinning must be at least 1");
}

namespace {

std::string failure_message(const std::string& what, Index step, Index iterations, double residual)
{
    std::ostringstream os;
    os << what << " (step " << step << ", " << iterations << " nonlinear iterations, residual "
       << residual << ")";
    return os.str();
}

}  // namespace

StepFailure::StepFailure(const std::string& what, Index step, Index iterations, double residual,
                         FeFunction last_iterate)
    : std::runtime_error(failure_message(what, step, iterations, residual)),
      step_(step),
      iterations_(iterations),
      residual_(residual),
      last_iterate_(std::move(last_iterate))
{
}

namespace {

struct StepSystem {
    const FemSpace& space;
    const SchemeParams& p;
    double tau;
    Vector rhs;  // free rows of M X_prev + tau*lambda*M g + noise
    double tol;

    Vector residual(std::span<const double> x_full) const
    {
        const Vector xf = space.restrict_to_free(x_full);
        Vector r = spmv(space.free_mass(), xf);
        const double mass_scale = 1.0 + tau * p.lambda;
        for (double& v : r) {
            v *= mass_scale;
        }
        if (p.delta > 0.0) {
            const Vector ax = spmv(space.free_stiffness(), xf);
            for (Index i = 0; i < r.size(); ++i) {
                r[i] += tau * p.delta * ax[i];
            }
        }
        const Vector tv = space.restrict_to_free(tv_operator_load(space.mesh(), x_full, p.eps));
        for (Index i = 0; i < r.size(); ++i) {
            r[i] += tau * tv[i] - rhs[i];
        }
        return r;
    }
};

StepSystem make_system(const FemSpace& space, std::span<const double> x_prev,
                       std::span<const double> noise_vec, const SchemeParams& p,
                       std::span<const double> g)
{
    const Index n = space.mesh().num_nodes();
    if (x_prev.size() != n || noise_vec.size() != n || g.size() != n) {
        throw std::invalid_argument("implicit_step: vector length differs from node count");
    }
    const double tau = p.tau();
    const Vector m_prev = spmv(space.mass(), x_prev);
    const Vector m_g = spmv(space.mass(), g);
    Vector full(n);
    for (Index i = 0; i < n; ++i) {
        full[i] = m_prev[i] + tau * p.lambda * m_g[i] + noise_vec[i];
    }
    const double scale = 1.0 + norm2(space.restrict_to_free(m_prev));
    return StepSystem{space, p, tau, space.restrict_to_free(full), p.newton_tol * scale};
}

}  // namespace

Vector step_residual(const FemSpace& space, std::span<const double> x, std::span<const double> x_prev,
                     std::span<const double> noise_vec, const SchemeParams& p,
                     std::span<const double> g)
{
    return make_system(space, x_prev, noise_vec, p, g).residual(x);
}

StepResult implicit_step(const FemSpace& space, const FeFunction& x_prev,
                         std::span<const double> noise_vec, const SchemeParams& p,
                         std::span<const double> g, const FeFunction* initial_iterate)
{
    p.validate();
    const Mesh& mesh = space.mesh();
    if (!has_zero_trace(mesh, x_prev.values)) {
        throw std::invalid_argument("implicit_step: previous state must have zero trace");
    }
    const StepSystem sys = make_system(space, x_prev.values, noise_vec, p, g);

    StepResult out;
    out.state = initial_iterate ? *initial_iterate : x_prev;
    if (!has_zero_trace(mesh, out.state.values)) {
        throw std::invalid_argument("implicit_step: initial iterate must have zero trace");
    }
    out.state.space = Space::zero_trace;
    out.residual = norm2(sys.residual(out.state.values));
    if (out.residual <= sys.tol) {
        return out;
    }

    const double mass_scale = 1.0 + sys.tau * p.lambda;
    const CsrMatrix base = space.free_mass().combine(mass_scale, space.free_stiffness(),
                                                     sys.tau * p.delta);
    Vector weights(mesh.num_elements());
    CgOptions cg;
    cg.tol = 1e-12;

    for (Index it = 1; it <= p.max_nonlinear_iters; ++it) {
        for (Index k = 0; k < mesh.num_elements(); ++k) {
            const Point2 gr = element_gradient(mesh, out.state.values, k);
            weights[k] = 1.0 / std::sqrt(gr.x * gr.x + gr.y * gr.y + p.eps * p.eps);
        }
        const CsrMatrix system = base.combine(1.0, space.weighted_free_stiffness(weights), sys.tau);
        const Vector guess = space.restrict_to_free(out.state.values);
        CgResult sol;
        try {
            sol = cg_solve(system, sys.rhs, cg, guess);
        } catch (const CgFailure& e) {
            throw StepFailure(std::string("implicit_step: linear solve failed: ") + e.what(), 0,
                              it, out.residual, out.state);
        }
        out.state = space.extend_from_free(sol.x);
        out.iterations = it;
        out.residual = norm2(sys.residual(out.state.values));
        if (out.residual <= sys.tol) {
            return out;
        }
    }
    throw StepFailure("implicit_step: nonlinear iteration did not converge", 0, out.iterations,
                      out.residual, out.state);
}

const FeFunction* TrajectoryRecord::state_at(Index step) const noexcept
{
    const auto it = std::lower_bound(state_steps.begin(), state_steps.end(), step);
    if (it == state_steps.end() || *it != step) {
        return nullptr;
    }
    return &states[static_cast<std::size_t>(it - state_steps.begin())];
}

TrajectoryRecord run_trajectory(const SchemeParams& p, const FemSpace& space, const FeFunction& x0,
                                std::span<const double> g, const WienerPath& path,
                                const StepObserver& observer)
{
    p.validate();
    const Mesh& mesh = space.mesh();
    if (!has_zero_trace(mesh, x0.values)) {
        throw std::invalid_argument("run_trajectory: initial state must have zero trace");
    }
    const bool stochastic = p.mu != 0.0;
    if (stochastic) {
        if (path.n_steps != p.N || path.scalar != is_scalar(p.noise) ||
            (!path.scalar && path.n_nodes != mesh.num_nodes())) {
            throw std::invalid_argument("run_trajectory: Wiener path shape does not match parameters");
        }
    }

    TrajectoryRecord rec;
    rec.params = p;
    rec.path_checksum = path.checksum();
    const double tau = p.tau();
    rec.times.resize(p.N + 1);
    for (Index i = 0; i <= p.N; ++i) {
        rec.times[i] = static_cast<double>(i) * tau;
    }
    rec.energies.reserve(p.N + 1);
    rec.step_increments.reserve(p.N + 1);
    rec.nonlinear_iters.reserve(p.N + 1);

    FeFunction x = x0;
    x.space = Space::zero_trace;
    rec.states.push_back(x);
    rec.state_steps.push_back(0);
    rec.energies.push_back(energy(space, x.values, g, p.eps, p.lambda));
    rec.step_increments.push_back(0.0);
    rec.nonlinear_iters.push_back(0);

    const Vector zero_noise(mesh.num_nodes(), 0.0);
    for (Index i = 1; i <= p.N; ++i) {
        const Vector noise_vec =
            stochastic ? noise_load(space, x.values, g, path, i, p.noise, p.mu) : zero_noise;
        StepResult step;
        try {
            step = implicit_step(space, x, noise_vec, p, g);
        } catch (const StepFailure& e) {
            throw StepFailure("run_trajectory: step failed", i, e.iterations(), e.residual(),
                              e.last_iterate());
        }
        Vector diff(x.size());
        for (Index l = 0; l < diff.size(); ++l) {
            diff[l] = step.state[l] - x[l];
        }
        rec.step_increments.push_back(space.mass_norm_sq(diff));
        rec.nonlinear_iters.push_back(step.iterations);
        rec.energies.push_back(energy(space, step.state.values, g, p.eps, p.lambda));
        if (observer) {
            observer(i, step.state, x, noise_vec);
        }
        x = std::move(step.state);
        if (i % p.thinning == 0 || i == p.N) {
            rec.states.push_back(x);
            rec.state_steps.push_back(i);
        }
    }
    return rec;
}

const FeFunction& interpolant_eval(const TrajectoryRecord& rec, double t, Side side)
{
    if (rec.times.empty()) {
        throw std::invalid_argument("interpolant_eval: empty record");
    }
    if (!(t >= 0.0 && t <= rec.times.back())) {
        throw std::out_of_range("interpolant_eval: t outside [0, T]");
    }
    Index i = 0;
    if (side == Side::right) {
        i = static_cast<Index>(std::lower_bound(rec.times.begin(), rec.times.end(), t) -
                               rec.times.begin());
    } else {
        i = static_cast<Index>(std::upper_bound(rec.times.begin(), rec.times.end(), t) -
                               rec.times.begin()) -
            1;
    }
    const FeFunction* s = rec.state_at(i);
    if (s == nullptr) {
        throw std::invalid_argument("interpolant_eval: required state was thinned out");
    }
    return *s;
}

}  // namespace stvf
