#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "stvf/fem.hpp"
#include "stvf/noise.hpp"

namespace stvf {

/// Scalars of the implicit scheme. tau = T / N.
struct SchemeParams {
    double T = 0.05;
    Index N = 5000;
    double eps = 1.0 / 32.0;
    double delta = 0.0;
    double lambda = 200.0;
    double mu = 1.0;
    double nu = 0.1;
    NoiseKind noise = NoiseKind::tracking;
    double newton_tol = 1e-10;
    Index max_nonlinear_iters = 200;
    std::uint64_t seed = 0;
    /// Keep every thinning-th state (and always the last one).
    Index thinning = 1;

    [[nodiscard]] double tau() const noexcept { return T / static_cast<double>(N); }
    /// Throws std::invalid_argument on a violated invariant.
    void validate() const;
};

class StepFailure : public std::runtime_error {
public:
    StepFailure(const std::string& what, Index step, Index iterations, double residual,
                FeFunction last_iterate);

    /// Step index inside a trajectory; 0 when raised by a standalone step.
    [[nodiscard]] Index step() const noexcept { return step_; }
    [[nodiscard]] Index iterations() const noexcept { return iterations_; }
    [[nodiscard]] double residual() const noexcept { return residual_; }
    [[nodiscard]] const FeFunction& last_iterate() const noexcept { return last_iterate_; }

private:
    Index step_;
    Index iterations_;
    double residual_;
    FeFunction last_iterate_;
};

struct StepResult {
    FeFunction state;
    Index iterations = 0;
    double residual = 0.0;
};

/// Algebraic residual on the free nodes of
///   M X + tau*delta*A X + tau*b_tv(X) + tau*lambda*M(X - g) - M X_prev - noise.
[[nodiscard]] Vector step_residual(const FemSpace& space, std::span<const double> x,
                                   std::span<const double> x_prev,
                                   std::span<const double> noise_vec, const SchemeParams& p,
                                   std::span<const double> g);

/// One implicit step, solved by lagged-diffusivity iteration: the TV
/// coefficient 1/sqrt(|grad X|^2 + eps^2) is frozen at the previous iterate
/// and the SPD system (M(1 + tau*lambda) + tau*delta*A + tau*A_w) X = rhs is
/// solved, until ||residual||_2 <= newton_tol * (1 + ||M X_prev||_2).
[[nodiscard]] StepResult implicit_step(const FemSpace& space, const FeFunction& x_prev,
                                       std::span<const double> noise_vec, const SchemeParams& p,
                                       std::span<const double> g,
                                       const FeFunction* initial_iterate = nullptr);

struct TrajectoryRecord {
    SchemeParams params;
    std::vector<double> times;              ///< t_0 .. t_N
    std::vector<Index> state_steps;         ///< step index of each stored state
    std::vector<FeFunction> states;
    std::vector<EnergyBreakdown> energies;  ///< one per step, 0 .. N
    std::vector<double> step_increments;    ///< ||X^i - X^{i-1}||_M^2, entry 0 is 0
    std::vector<Index> nonlinear_iters;     ///< entry 0 is 0
    std::uint64_t path_checksum = 0;

    /// Stored state for step i, if kept.
    [[nodiscard]] const FeFunction* state_at(Index step) const noexcept;
};

/// Observer called after every completed step with (step, X^i, X^{i-1}, noise vector).
using StepObserver = std::function<void(Index, const FeFunction&, const FeFunction&,
                                        std::span<const double>)>;

[[nodiscard]] TrajectoryRecord run_trajectory(const SchemeParams& p, const FemSpace& space,
                                              const FeFunction& x0, std::span<const double> g,
                                              const WienerPath& path,
                                              const StepObserver& observer = {});

enum class Side { left, right };

/// Piecewise-constant interpolants: right gives X^i on (t_{i-1}, t_i] (X^0 at
/// t = 0); left gives X^{i-1} on [t_{i-1}, t_i) (X^N at t = T).
[[nodiscard]] const FeFunction& interpolant_eval(const TrajectoryRecord& rec, double t, Side side);

}  // namespace stvf
