#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stvf/fem.hpp"

namespace stvf {

/// Signature of tv_operator_load; lets the harness be run against a
/// deliberately broken operator to prove that it can fail.
using TvLoadFn = std::function<Vector(const Mesh&, std::span<const double>, double)>;

struct PropertySuiteOptions {
    Index n = 16;
    Index samples = 1000;
    std::vector<double> eps_list{1.0, 1.0 / 32.0, 1e-3};
    std::uint64_t seed = 0;
    TvLoadFn tv_load;  ///< defaults to tv_operator_load
};

struct PropertyOutcome {
    std::string name;
    bool passed = true;
    Index checked = 0;
    /// Most negative normalized margin seen (value / scale); >= -tolerance passes.
    double worst_margin = 0.0;
    std::optional<std::uint64_t> offending_seed;
    std::string detail;
};

/// Random zero-trace field for property checks: nodal values U(-1,1) on free
/// nodes scaled by 10^U(-3,1), so gradients range across the eps scales.
[[nodiscard]] FeFunction random_zero_trace_field(const Mesh& mesh, std::uint64_t seed);

/// Positivity of the discrete-Laplacian pairing, monotonicity of the TV
/// operator, the convexity (subgradient) inequality, eps-ordering of the
/// regularized TV, and the mass/stiffness assembly identities.
[[nodiscard]] std::vector<PropertyOutcome> run_property_suite(const PropertySuiteOptions& options);

}  // namespace stvf
