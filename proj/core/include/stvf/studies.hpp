#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "stvf/fem.hpp"
#include "stvf/io_formats.hpp"
#include "stvf/noise.hpp"
#include "stvf/stepper.hpp"

namespace stvf {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Each index is
/// processed exactly once; results must be written to per-index slots.
void parallel_for(Index count, Index workers, const std::function<void(Index)>& fn);

/// Data and scheme parameters of one experiment. The defaults are the
/// denoising baseline: unit square, n = 32, T = 0.05, N = 5000, eps = 1/32,
/// lambda = 200, mu = 1, tracking noise, nu = 0.1, x0 = 0, and g the
/// interpolated indicator of the disc of radius 0.25 about (0.5, 0.5).
struct ExperimentConfig {
    Index n = 32;
    SchemeParams params{};
    Point2 disc_center{0.5, 0.5};
    double disc_radius = 0.25;
    /// Half-width of the band around the deterministic energy, relative to
    /// the deterministic plateau energy.
    double energy_band = 0.10;
    Index workers = 1;
};

[[nodiscard]] ExperimentConfig baseline_config();
/// Monte Carlo desk scale: n = 8, tau = 1e-3, N = 50, scalar-linear noise.
[[nodiscard]] ExperimentConfig desk_config();

/// Stream indices under a master seed.
[[nodiscard]] std::uint64_t sample_seed(std::uint64_t master, Index sample) noexcept;
[[nodiscard]] std::uint64_t image_seed(std::uint64_t master) noexcept;

struct NoisyImage {
    FeFunction clean;  ///< g: interpolated closed-disc indicator
    FeFunction noisy;  ///< g^h = g + xi_h, xi_h = nu * U(-1,1) on interior nodes
};

[[nodiscard]] NoisyImage make_noisy_image(const Mesh& mesh, double nu, std::uint64_t seed,
                                          Point2 center = {0.5, 0.5}, double radius = 0.25);

/// Monte Carlo estimate of one statistic, optionally against an upper bound.
struct McReport {
    std::string name;
    std::string statistic;
    std::vector<double> values;
    double mean = 0.0;
    double std_error = 0.0;
    double bound = std::numeric_limits<double>::infinity();
    bool passed = true;

    /// mean <= bound + 3 * std_error.
    void check_bound(double upper);
};

/// Mean and standard error (unbiased sample variance) of per-sample values.
[[nodiscard]] McReport summarize(std::string name, std::string statistic, std::vector<double> values);

struct RateLevel {
    double parameter = 0.0;
    McReport estimate;
};

struct RateStudyReport {
    std::string name;
    std::vector<RateLevel> levels;
    double slope = 0.0;
    double slope_min = 0.7;
    double slope_max = std::numeric_limits<double>::infinity();
    bool passed = false;
    bool inconclusive = false;
    std::string detail;

    [[nodiscard]] Table table() const;
};

/// Least-squares slope of log2(y) against log2(x).
[[nodiscard]] double log2_slope(const std::vector<double>& x, const std::vector<double>& y);

/// For consecutive pairs (eps, eps/2) of a halving list, estimates
/// d(eps) = E[max_i ||X_i^eps - X_i^{eps/2}||_M^2] on coupled scalar noise and
/// fits the log2-slope of d against eps. Passes when slope is in [0.7, 1.6].
[[nodiscard]] RateStudyReport study_cauchy_eps(const std::vector<double>& eps_list, Index samples,
                                               const ExperimentConfig& base);

/// D(delta) = max_i E||X_i^{delta} - X_i^{0}||_M^2 for the viscous scheme
/// against the delta = 0 scheme on coupled noise. Slope over positive deltas
/// must be at least 0.7; D(0) is reported as an exact zero.
[[nodiscard]] RateStudyReport study_delta_rate(const std::vector<double>& delta_list, Index samples,
                                               const ExperimentConfig& base);

struct StabilityReport {
    std::vector<McReport> checks;
    bool passed = false;

    [[nodiscard]] Table table() const;
};

/// Monte Carlo a priori estimates for scalar-linear noise, each compared
/// with its bound instantiated with the Gronwall constants:
///   sup_i E||X^i||^2                     <= e^{2T}(E||x0||^2 + 2 T lambda ||g||^2)
///   energy estimate (all sums)           <= 1/2 E||x0||^2 + T*(bound above) + T lambda ||g||^2
///   sup_i E||grad X^i||^2                <= e^{2T}(E||grad x0||^2 + 2 T lambda ||grad g||^2)
///   discrete energy law                  <= e^{2T}(1/2||x0||^2 + T(eps|O| + lambda/2 ||g||^2))
[[nodiscard]] StabilityReport study_stability_bounds(Index samples, const ExperimentConfig& base);

struct EnergyTraceReport {
    TrajectoryRecord stochastic;
    TrajectoryRecord deterministic;
    NoisyImage image;
    double noisy_image_energy = 0.0;
    /// J(X^i) + ||X^i - X^{i-1}||_M^2 / tau <= J(X^{i-1}) + 10 newton_tol on the mu = 0 run.
    bool deterministic_nonincreasing = false;
    bool within_band = false;
    bool below_noisy_energy = false;
    bool plateau = false;
    double distance_noisy = 0.0;      ///< ||g^h - g||_M
    double distance_final = 0.0;      ///< ||X^N - g||_M
    bool denoised = false;
    bool passed = false;

    [[nodiscard]] Table table() const;
};

/// One realization plus its mu = 0 twin on the same data.
[[nodiscard]] EnergyTraceReport study_energy_trace(const ExperimentConfig& cfg);

class MinimizerFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MinimizerResult {
    FeFunction u;
    Index iterations = 0;
    double residual = 0.0;
};

/// Minimizer of tv_eps(u) + lambda/2 ||u - g||^2 over zero-trace P1 functions
/// by lagged-diffusivity iteration on (lambda M + A_w) u = lambda M g.
/// Throws MinimizerFailure when max_iter is exhausted.
[[nodiscard]] MinimizerResult minimize_energy(const FemSpace& space, std::span<const double> g,
                                              double eps, double lambda, double tol = 1e-11,
                                              Index max_iter = 20000);

struct StationaryReport {
    double flow_energy = 0.0;
    double min_energy = 0.0;
    double relative_gap = 0.0;
    Index steps = 0;
    double final_rate = 0.0;  ///< ||X^i - X^{i-1}||_M / tau at the last step
    bool stationary = false;
    bool passed = false;
    bool inconclusive = false;
};

/// Deterministic flow run until ||X^i - X^{i-1}||_M / tau < rate_threshold,
/// compared with minimize_energy. Passes when the relative gap <= gap_tol.
[[nodiscard]] StationaryReport study_stationary_vs_minimizer(const ExperimentConfig& cfg,
                                                             double rate_threshold = 1e-3,
                                                             Index max_steps = 20000,
                                                             double gap_tol = 1e-3);

}  // namespace stvf
