#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "stvf/linalg.hpp"

namespace stvf {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

using Triangle = std::array<Index, 3>;

/// Conforming triangulation with P1 element geometry. Structured meshes of
/// the unit square remember their subdivision count so that nodal data can
/// be written as an (n+1) x (n+1) raster.
class Mesh {
public:
    Mesh(std::vector<Point2> nodes, std::vector<Triangle> triangles, std::vector<bool> boundary,
         Index structured_n = 0);

    [[nodiscard]] Index num_nodes() const noexcept { return nodes_.size(); }
    [[nodiscard]] Index num_elements() const noexcept { return triangles_.size(); }
    [[nodiscard]] std::span<const Point2> nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::span<const Triangle> triangles() const noexcept { return triangles_; }
    [[nodiscard]] const Triangle& triangle(Index k) const { return triangles_.at(k); }
    [[nodiscard]] const std::vector<bool>& boundary_mask() const noexcept { return boundary_; }
    [[nodiscard]] bool is_boundary(Index node) const { return boundary_.at(node); }

    [[nodiscard]] double area(Index k) const { return areas_.at(k); }
    /// Constant gradient of the k-th element's local basis function a (0..2).
    [[nodiscard]] const Point2& basis_gradient(Index k, int a) const
    {
        return gradients_.at(k)[static_cast<std::size_t>(a)];
    }

    /// Mesh size: maximum element diameter.
    [[nodiscard]] double h() const noexcept { return h_; }
    [[nodiscard]] double total_area() const;
    /// max element diameter / min inscribed-circle diameter.
    [[nodiscard]] double quasi_uniformity_ratio() const;

    [[nodiscard]] bool is_structured() const noexcept { return structured_n_ > 0; }
    [[nodiscard]] Index structured_n() const noexcept { return structured_n_; }

    /// Node indices with boundary_mask false, ascending.
    [[nodiscard]] const std::vector<Index>& free_nodes() const noexcept { return free_nodes_; }

private:
    std::vector<Point2> nodes_;
    std::vector<Triangle> triangles_;
    std::vector<bool> boundary_;
    std::vector<double> areas_;
    std::vector<std::array<Point2, 3>> gradients_;
    std::vector<Index> free_nodes_;
    double h_ = 0.0;
    Index structured_n_ = 0;
};

/// (n+1)^2 grid nodes, node (i, j) at (i/n, j/n) with index j*(n+1)+i; each
/// cell split along its (0,0)-(1,1) diagonal into two counterclockwise
/// triangles. Requires n >= 2.
[[nodiscard]] Mesh build_unit_square_mesh(Index n);

enum class Space { whole, zero_trace };

/// Nodal coefficients of a P1 function. Zero-trace functions carry exact
/// zeros on boundary nodes.
struct FeFunction {
    Vector values;
    Space space = Space::zero_trace;

    static FeFunction zeros(const Mesh& mesh, Space space = Space::zero_trace)
    {
        return {Vector(mesh.num_nodes(), 0.0), space};
    }

    [[nodiscard]] Index size() const noexcept { return values.size(); }
    double& operator[](Index i) { return values[i]; }
    double operator[](Index i) const { return values[i]; }
};

/// True when every boundary value of u is exactly zero.
[[nodiscard]] bool has_zero_trace(const Mesh& mesh, std::span<const double> u);

/// Nodal interpolation; boundary values are set to 0 when zero_trace.
[[nodiscard]] FeFunction interpolate(const std::function<double(double, double)>& f,
                                     const Mesh& mesh, bool zero_trace);

}  // namespace stvf
