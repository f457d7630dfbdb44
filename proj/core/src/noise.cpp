#include "stvf/noise.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <string>

namespace stvf {

std::string_view to_string(NoiseKind kind) noexcept
{
    switch (kind) {
    case NoiseKind::scalar_linear: return "linear";
    case NoiseKind::tracking: return "tracking";
    case NoiseKind::gradient: return "gradient";
    case NoiseKind::additive: return "additive";
    }
    return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name)
{
    if (name == "linear") return NoiseKind::scalar_linear;
    if (name == "tracking") return NoiseKind::tracking;
    if (name == "gradient") return NoiseKind::gradient;
    if (name == "additive") return NoiseKind::additive;
    throw std::invalid_argument("unknown noise kind '" + std::string(name) +
                                "' (expected linear|tracking|gradient|additive)");
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept
{
    std::uint64_t s = master;
    const std::uint64_t a = splitmix64(s);
    std::uint64_t t = a ^ (index * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL);
    return splitmix64(t);
}

Rng::Rng(std::uint64_t seed)
{
    std::uint64_t s = seed;
    std::array<std::uint32_t, 8> words{};
    for (std::size_t i = 0; i < words.size(); i += 2) {
        const std::uint64_t v = splitmix64(s);
        words[i] = static_cast<std::uint32_t>(v);
        words[i + 1] = static_cast<std::uint32_t>(v >> 32);
    }
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
}

double Rng::uniform01() noexcept
{
    const std::uint64_t bits = engine_() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double Rng::normal() noexcept
{
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(angle);
    has_cached_ = true;
    return r * std::cos(angle);
}

double WienerPath::scalar_increment(Index step) const
{
    if (!scalar) {
        throw std::logic_error("WienerPath: scalar increment requested from a nodal path");
    }
    if (step < 1 || step > n_steps) {
        throw std::out_of_range("WienerPath: step out of range");
    }
    return increments[step - 1];
}

std::span<const double> WienerPath::nodal_increment(Index step) const
{
    if (scalar) {
        throw std::logic_error("WienerPath: nodal increment requested from a scalar path");
    }
    if (step < 1 || step > n_steps) {
        throw std::out_of_range("WienerPath: step out of range");
    }
    return std::span<const double>(increments).subspan((step - 1) * n_nodes, n_nodes);
}

std::uint64_t WienerPath::checksum() const noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    mix(&n_steps, sizeof n_steps);
    mix(&n_nodes, sizeof n_nodes);
    mix(&tau, sizeof tau);
    mix(increments.data(), increments.size() * sizeof(double));
    return h;
}

WienerPath sample_path(std::uint64_t seed, Index n_steps, const std::vector<bool>& boundary_mask,
                       NoiseKind kind, double tau)
{
    if (n_steps < 1) {
        throw std::invalid_argument("sample_path: at least one step required");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("sample_path: tau must be positive");
    }
    WienerPath path;
    path.seed = seed;
    path.tau = tau;
    path.scalar = is_scalar(kind);
    path.n_steps = n_steps;
    path.n_nodes = path.scalar ? 0 : boundary_mask.size();

    Rng rng(seed);
    const double sd = std::sqrt(tau);
    if (path.scalar) {
        path.increments.resize(n_steps);
        for (double& v : path.increments) {
            v = sd * rng.normal();
        }
        return path;
    }
    path.increments.assign(n_steps * path.n_nodes, 0.0);
    for (Index i = 0; i < n_steps; ++i) {
        for (Index l = 0; l < path.n_nodes; ++l) {
            if (!boundary_mask[l]) {
                path.increments[i * path.n_nodes + l] = sd * rng.normal();
            }
        }
    }
    return path;
}

WienerPath sample_path(std::uint64_t seed, Index n_steps, Index n_nodes, NoiseKind kind, double tau)
{
    return sample_path(seed, n_steps, std::vector<bool>(n_nodes, false), kind, tau);
}

Vector noise_load(const FemSpace& space, std::span<const double> x_prev, std::span<const double> g,
                  const WienerPath& path, Index step, NoiseKind kind, double mu)
{
    const Mesh& mesh = space.mesh();
    const Index n = mesh.num_nodes();
    if (x_prev.size() != n || g.size() != n) {
        throw std::invalid_argument("noise_load: vector length differs from node count");
    }
    if (path.scalar != is_scalar(kind)) {
        throw std::invalid_argument("noise_load: path shape does not match the noise kind");
    }
    if (!path.scalar && path.n_nodes != n) {
        throw std::invalid_argument("noise_load: path node count differs from mesh");
    }

    Vector b;
    switch (kind) {
    case NoiseKind::scalar_linear: {
        b = spmv(space.mass(), x_prev);
        const double dw = mu * path.scalar_increment(step);
        for (double& v : b) {
            v *= dw;
        }
        break;
    }
    case NoiseKind::additive:
    case NoiseKind::tracking: {
        const auto dbeta = path.nodal_increment(step);
        Vector nodal(n);
        for (Index l = 0; l < n; ++l) {
            const double sigma = kind == NoiseKind::additive ? 1.0 : std::abs(x_prev[l] - g[l]);
            nodal[l] = mu * sigma * dbeta[l];
        }
        b = spmv(space.mass(), nodal);
        break;
    }
    case NoiseKind::gradient: {
        const auto dbeta = path.nodal_increment(step);
        b.assign(n, 0.0);
        for (Index k = 0; k < mesh.num_elements(); ++k) {
            const Point2 gr = element_gradient(mesh, x_prev, k);
            const double sigma = std::sqrt(gr.x * gr.x + gr.y * gr.y);
            if (sigma == 0.0) {
                continue;
            }
            const ElementMatrix me = element_mass_matrix(mesh.area(k));
            const Triangle& t = mesh.triangle(k);
            for (int a = 0; a < 3; ++a) {
                double acc = 0.0;
                for (int c = 0; c < 3; ++c) {
                    acc += me[a][c] * dbeta[t[c]];
                }
                b[t[a]] += mu * sigma * acc;
            }
        }
        break;
    }
    }
    for (Index l = 0; l < n; ++l) {
        if (mesh.is_boundary(l)) {
            b[l] = 0.0;
        }
    }
    return b;
}

}  // namespace stvf
