#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "stvf/fem.hpp"
#include "stvf/linalg.hpp"

namespace stvf {

/// Multiplicative structure of the stochastic forcing.
///   scalar_linear: X dW with one scalar Wiener process
///   tracking:      |X - g| dW^h
///   gradient:      |grad X| dW^h
///   additive:      dW^h
/// dW^h = sum_l phi_l d(beta_l) over interior nodes.
enum class NoiseKind { scalar_linear, tracking, gradient, additive };

[[nodiscard]] std::string_view to_string(NoiseKind kind) noexcept;
/// Accepts "linear", "tracking", "gradient", "additive".
[[nodiscard]] NoiseKind parse_noise_kind(std::string_view name);
[[nodiscard]] constexpr bool is_scalar(NoiseKind kind) noexcept
{
    return kind == NoiseKind::scalar_linear;
}

[[nodiscard]] std::uint64_t splitmix64(std::uint64_t& state) noexcept;
/// Seed of the index-th independent stream under a master seed.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

/// std::mt19937_64 (bit-specified by the standard) seeded through splitmix64.
/// Uniforms use the top 53 bits; normals use Box-Muller, returning the cosine
/// branch first and the sine branch on the next call.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Uniform on the open interval (0, 1).
    double uniform01() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }
    double normal() noexcept;

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// Wiener increments over N steps of size tau. Scalar paths hold N values;
/// nodal paths hold an N x L array (step-major) with exact zeros on boundary
/// nodes, which are never drawn.
struct WienerPath {
    std::uint64_t seed = 0;
    double tau = 0.0;
    bool scalar = true;
    Index n_steps = 0;
    Index n_nodes = 0;
    Vector increments;

    /// step in [1, N].
    [[nodiscard]] double scalar_increment(Index step) const;
    [[nodiscard]] std::span<const double> nodal_increment(Index step) const;
    /// FNV-1a over the increment bytes and shape; used to assert coupling.
    [[nodiscard]] std::uint64_t checksum() const noexcept;
};

[[nodiscard]] WienerPath sample_path(std::uint64_t seed, Index n_steps,
                                     const std::vector<bool>& boundary_mask, NoiseKind kind,
                                     double tau);
/// Nodal variant without boundary nodes (all L rows drawn).
[[nodiscard]] WienerPath sample_path(std::uint64_t seed, Index n_steps, Index n_nodes,
                                     NoiseKind kind, double tau);

/// Load vector of the stochastic term for step `step`:
///   b_l = mu * (sigma(X_prev) dW_step^h, phi_l)   (nodal kinds)
///   b_l = mu * (X_prev, phi_l) dW_step            (scalar_linear)
/// with zeros on boundary rows.
[[nodiscard]] Vector noise_load(const FemSpace& space, std::span<const double> x_prev,
                                std::span<const double> g, const WienerPath& path, Index step,
                                NoiseKind kind, double mu);

}  // namespace stvf
