#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "stvf/linalg.hpp"
#include "stvf/mesh.hpp"

namespace stvf {

using ElementMatrix = std::array<std::array<double, 3>, 3>;

/// |K|/12 * [[2,1,1],[1,2,1],[1,1,2]].
[[nodiscard]] ElementMatrix element_mass_matrix(double area);
/// |K| * (grad phi_a . grad phi_b).
[[nodiscard]] ElementMatrix element_stiffness_matrix(const Mesh& mesh, Index element);

/// Full (no boundary elimination) Gram matrices of the nodal basis.
[[nodiscard]] CsrMatrix assemble_mass(const Mesh& mesh);
[[nodiscard]] CsrMatrix assemble_stiffness(const Mesh& mesh);

[[nodiscard]] Point2 element_gradient(const Mesh& mesh, std::span<const double> u, Index element);

/// b_l = sum_K |K| grad u_K / sqrt(|grad u_K|^2 + eps^2) . grad phi_l|_K on
/// free nodes, zero on boundary nodes. eps == 0 is accepted for diagnostics
/// and throws std::domain_error on an element with zero gradient.
[[nodiscard]] Vector tv_operator_load(const Mesh& mesh, std::span<const double> u, double eps);

struct EnergyBreakdown {
    double tv_eps = 0.0;    ///< sum_K |K| sqrt(|grad u|^2 + eps^2)
    double tv = 0.0;        ///< sum_K |K| |grad u|
    double fidelity = 0.0;  ///< lambda/2 (u-g)^T M (u-g)
    double total = 0.0;     ///< tv_eps + fidelity
};

/// Mesh plus assembled matrices, and their restriction to the free
/// (non-Dirichlet) nodes. Immutable after construction; safe to share.
class FemSpace {
public:
    explicit FemSpace(Mesh mesh);

    [[nodiscard]] const Mesh& mesh() const noexcept { return mesh_; }
    [[nodiscard]] const CsrMatrix& mass() const noexcept { return mass_; }
    [[nodiscard]] const CsrMatrix& stiffness() const noexcept { return stiffness_; }
    [[nodiscard]] const CsrMatrix& free_mass() const noexcept { return free_mass_; }
    [[nodiscard]] const CsrMatrix& free_stiffness() const noexcept { return free_stiffness_; }

    [[nodiscard]] Index num_free() const noexcept { return mesh_.free_nodes().size(); }
    [[nodiscard]] const std::vector<Index>& free_nodes() const noexcept { return mesh_.free_nodes(); }

    /// Free-node values of a full nodal vector.
    [[nodiscard]] Vector restrict_to_free(std::span<const double> full) const;
    /// Zero-trace function with the given free-node values.
    [[nodiscard]] FeFunction extend_from_free(std::span<const double> free) const;

    /// Free-node stiffness matrix with element K scaled by weights[K].
    /// Shares the sparsity pattern of free_mass() and free_stiffness().
    [[nodiscard]] CsrMatrix weighted_free_stiffness(std::span<const double> element_weights) const;

    /// u^T M v with the full mass matrix.
    [[nodiscard]] double mass_inner(std::span<const double> u, std::span<const double> v) const;
    [[nodiscard]] double mass_norm_sq(std::span<const double> u) const { return mass_inner(u, u); }
    /// ||grad u||^2 = u^T A u.
    [[nodiscard]] double grad_norm_sq(std::span<const double> u) const;

private:
    Mesh mesh_;
    CsrMatrix mass_;
    CsrMatrix stiffness_;
    CsrMatrix free_mass_;
    CsrMatrix free_stiffness_;
    std::vector<Index> free_index_;
    // For element K and local pair (a, b): position in the free-pattern
    // values array, or npos when either node is on the boundary.
    std::vector<std::array<Index, 9>> element_slots_;
};

[[nodiscard]] EnergyBreakdown energy(const FemSpace& space, std::span<const double> u,
                                     std::span<const double> g, double eps, double lambda);

/// w = Delta_h u, i.e. M w = -A u on the free nodes, zero on the boundary.
[[nodiscard]] FeFunction discrete_laplacian(const FemSpace& space, const FeFunction& u,
                                            double tol = 1e-12);

/// q(u) = -sum_K (|grad u_K|^2 + eps^2)^{-1/2} (grad u, grad Delta_h u)_K, which
/// is nonnegative for every zero-trace u.
[[nodiscard]] double check_positivity(const FemSpace& space, const FeFunction& u, double eps);

/// L2 projection of a P1 function given on `space`'s own mesh.
[[nodiscard]] FeFunction l2_project(const FemSpace& space, std::span<const double> nodal_values,
                                    Space target = Space::zero_trace, double tol = 1e-12);

/// L2 projection of a P1 function living on a structured mesh nested in
/// (a refinement of) `space`'s structured mesh. Load integrals are exact.
[[nodiscard]] FeFunction l2_project(const FemSpace& space, const Mesh& source_mesh,
                                    std::span<const double> source_values,
                                    Space target = Space::zero_trace, double tol = 1e-12);

/// Element of a structured unit-square mesh containing p (ties resolved
/// toward the lower-left cell).
[[nodiscard]] Index locate_element(const Mesh& structured, const Point2& p);

/// Barycentric coordinates of p with respect to element k.
[[nodiscard]] std::array<double, 3> barycentric(const Mesh& mesh, Index element, const Point2& p);

}  // namespace stvf
