#include "stvf/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stvf {

namespace {

double distance(const Point2& a, const Point2& b)
{
    return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace

Mesh::Mesh(std::vector<Point2> nodes, std::vector<Triangle> triangles, std::vector<bool> boundary,
           Index structured_n)
    : nodes_(std::move(nodes)),
      triangles_(std::move(triangles)),
      boundary_(std::move(boundary)),
      structured_n_(structured_n)
{
    if (boundary_.size() != nodes_.size()) {
        throw std::invalid_argument("Mesh: boundary mask length differs from node count");
    }
    areas_.reserve(triangles_.size());
    gradients_.reserve(triangles_.size());
    for (const Triangle& t : triangles_) {
        for (Index v : t) {
            if (v >= nodes_.size()) {
                throw std::invalid_argument("Mesh: triangle references a missing node");
            }
        }
        const Point2& p0 = nodes_[t[0]];
        const Point2& p1 = nodes_[t[1]];
        const Point2& p2 = nodes_[t[2]];
        const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
        if (!(det > 0.0)) {
            throw std::invalid_argument("Mesh: triangles must be counterclockwise with positive area");
        }
        areas_.push_back(0.5 * det);
        // grad(lambda_a) = rot90(p_{a+2} - p_{a+1}) / det
        gradients_.push_back({Point2{(p1.y - p2.y) / det, (p2.x - p1.x) / det},
                              Point2{(p2.y - p0.y) / det, (p0.x - p2.x) / det},
                              Point2{(p0.y - p1.y) / det, (p1.x - p0.x) / det}});
        h_ = std::max({h_, distance(p0, p1), distance(p1, p2), distance(p2, p0)});
    }
    for (Index i = 0; i < nodes_.size(); ++i) {
        if (!boundary_[i]) {
            free_nodes_.push_back(i);
        }
    }
}

double Mesh::total_area() const
{
    CompensatedSum s;
    for (double a : areas_) {
        s.add(a);
    }
    return s.value();
}

double Mesh::quasi_uniformity_ratio() const
{
    double min_inscribed = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < triangles_.size(); ++k) {
        const Triangle& t = triangles_[k];
        const double perimeter = distance(nodes_[t[0]], nodes_[t[1]]) +
                                 distance(nodes_[t[1]], nodes_[t[2]]) +
                                 distance(nodes_[t[2]], nodes_[t[0]]);
        // inscribed diameter = 4 * area / perimeter
        min_inscribed = std::min(min_inscribed, 4.0 * areas_[k] / perimeter);
    }
    return h_ / min_inscribed;
}

Mesh build_unit_square_mesh(Index n)
{
    if (n < 2) {
        throw std::invalid_argument("build_unit_square_mesh: n must be at least 2");
    }
    const Index side = n + 1;
    std::vector<Point2> nodes;
    std::vector<bool> boundary;
    nodes.reserve(side * side);
    boundary.reserve(side * side);
    const double dn = static_cast<double>(n);
    for (Index j = 0; j < side; ++j) {
        for (Index i = 0; i < side; ++i) {
            nodes.push_back({static_cast<double>(i) / dn, static_cast<double>(j) / dn});
            boundary.push_back(i == 0 || j == 0 || i == n || j == n);
        }
    }
    std::vector<Triangle> triangles;
    triangles.reserve(2 * n * n);
    for (Index j = 0; j < n; ++j) {
        for (Index i = 0; i < n; ++i) {
            const Index v00 = j * side + i;
            const Index v10 = v00 + 1;
            const Index v01 = v00 + side;
            const Index v11 = v01 + 1;
            triangles.push_back({v00, v10, v11});
            triangles.push_back({v00, v11, v01});
        }
    }
    return Mesh(std::move(nodes), std::move(triangles), std::move(boundary), n);
}

bool has_zero_trace(const Mesh& mesh, std::span<const double> u)
{
    if (u.size() != mesh.num_nodes()) {
        return false;
    }
    for (Index i = 0; i < u.size(); ++i) {
        if (mesh.is_boundary(i) && u[i] != 0.0) {
            return false;
        }
    }
    return true;
}

FeFunction interpolate(const std::function<double(double, double)>& f, const Mesh& mesh,
                       bool zero_trace)
{
    FeFunction out = FeFunction::zeros(mesh, zero_trace ? Space::zero_trace : Space::whole);
    const auto nodes = mesh.nodes();
    for (Index i = 0; i < nodes.size(); ++i) {
        if (zero_trace && mesh.is_boundary(i)) {
            continue;
        }
        out.values[i] = f(nodes[i].x, nodes[i].y);
    }
    return out;
}

}  // namespace stvf
