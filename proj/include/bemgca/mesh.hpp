#pragma once

// Triangulated closed surfaces: sphere generation, affine charts over the
// reference triangle {0 <= t <= s <= 1}, and the ASCII interchange format.

#include "bemgca/errors.hpp"
#include "bemgca/vec3.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bemgca {

using TriangleIndices = std::array<std::size_t, 3>;

/// Vertex permutation: slot k of a chart refers to vertex perm[k] of the triangle.
using Permutation = std::array<std::uint8_t, 3>;

inline constexpr Permutation kIdentityPermutation{0, 1, 2};

/// Affine map of the reference triangle with vertices (0,0), (1,0), (1,1):
/// Phi(s,t) = origin + s*edge1 + t*edge2.
struct AffineChart {
    Vec3 origin;
    Vec3 edge1;
    Vec3 edge2;
    double gramian = 0.0;

    Vec3 operator()(double s, double t) const
    {
        return {origin.x + s * edge1.x + t * edge2.x,
                origin.y + s * edge1.y + t * edge2.y,
                origin.z + s * edge1.z + t * edge2.z};
    }
};

class SurfaceMesh {
public:
    SurfaceMesh() = default;

    /// Validates indices and computes normals and Gramians from the triangle winding.
    SurfaceMesh(std::vector<Vec3> vertices, std::vector<TriangleIndices> triangles)
        : vertices_(std::move(vertices)), triangles_(std::move(triangles))
    {
        normals_.reserve(triangles_.size());
        gramians_.reserve(triangles_.size());
        for (std::size_t t = 0; t < triangles_.size(); ++t) {
            const auto& tri = triangles_[t];
            for (auto v : tri) {
                if (v >= vertices_.size())
                    throw MeshError("triangle " + std::to_string(t) + " references vertex " + std::to_string(v) +
                                    " out of range");
            }
            if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
                throw MeshError("triangle " + std::to_string(t) + " has repeated vertex indices");
            const Vec3 n = cross(vertices_[tri[1]] - vertices_[tri[0]], vertices_[tri[2]] - vertices_[tri[0]]);
            const double g = norm(n);
            if (!(g > 0.0))
                throw MeshError("triangle " + std::to_string(t) + " is degenerate");
            normals_.push_back((1.0 / g) * n);
            gramians_.push_back(g);
        }
    }

    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_triangles() const { return triangles_.size(); }
    std::size_t size() const { return triangles_.size(); }

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<TriangleIndices>& triangles() const { return triangles_; }

    const Vec3& vertex(std::size_t v) const { return vertices_[v]; }
    const TriangleIndices& triangle(std::size_t t) const { return triangles_[t]; }
    const Vec3& normal(std::size_t t) const { return normals_[t]; }
    double gramian(std::size_t t) const { return gramians_[t]; }
    double area(std::size_t t) const { return 0.5 * gramians_[t]; }

    Vec3 midpoint(std::size_t t) const
    {
        const auto& tri = triangles_[t];
        return (1.0 / 3.0) * (vertices_[tri[0]] + vertices_[tri[1]] + vertices_[tri[2]]);
    }

    double total_area() const
    {
        double a = 0.0;
        for (double g : gramians_)
            a += 0.5 * g;
        return a;
    }

    /// Throws MeshError unless every directed edge is matched by exactly one
    /// reversed edge (closed, consistently oriented, manifold).
    void validate_closed() const
    {
        std::map<std::pair<std::size_t, std::size_t>, int> directed;
        for (const auto& tri : triangles_) {
            for (int k = 0; k < 3; ++k) {
                auto key = std::make_pair(tri[k], tri[(k + 1) % 3]);
                if (++directed[key] > 1)
                    throw MeshError("edge (" + std::to_string(key.first) + "," + std::to_string(key.second) +
                                    ") is used twice with the same orientation");
            }
        }
        for (const auto& [edge, count] : directed) {
            if (!directed.contains({edge.second, edge.first}))
                throw MeshError("edge (" + std::to_string(edge.first) + "," + std::to_string(edge.second) +
                                ") has no opposite half-edge; surface is open");
        }
    }

private:
    std::vector<Vec3> vertices_;
    std::vector<TriangleIndices> triangles_;
    std::vector<Vec3> normals_;
    std::vector<double> gramians_;
};

/// Chart of triangle `tri` whose reference vertices (0,0), (1,0), (1,1) map to
/// the triangle's vertices perm[0], perm[1], perm[2].
inline AffineChart chart(const SurfaceMesh& mesh, std::size_t tri, Permutation perm = kIdentityPermutation)
{
    if (tri >= mesh.num_triangles())
        throw std::out_of_range("chart: triangle index out of range");
    const auto& idx = mesh.triangle(tri);
    const Vec3& a = mesh.vertex(idx[perm[0]]);
    const Vec3& b = mesh.vertex(idx[perm[1]]);
    const Vec3& c = mesh.vertex(idx[perm[2]]);
    return AffineChart{a, b - a, c - b, mesh.gramian(tri)};
}

inline constexpr unsigned kMaxSphereLevel = 12;

/// Octahedron refined `level` times by midpoint subdivision, vertices projected
/// onto the unit sphere. Has 8 * 4^level triangles with outward orientation.
inline SurfaceMesh build_sphere_mesh(unsigned level)
{
    if (level > kMaxSphereLevel)
        throw ResourceError("sphere level " + std::to_string(level) + " exceeds the maximum of " +
                            std::to_string(kMaxSphereLevel));

    std::vector<Vec3> vertices{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    std::vector<TriangleIndices> triangles;
    for (int sx : {0, 1})
        for (int sy : {2, 3})
            for (int sz : {4, 5}) {
                TriangleIndices tri{std::size_t(sx), std::size_t(sy), std::size_t(sz)};
                const Vec3 n = cross(vertices[tri[1]] - vertices[tri[0]], vertices[tri[2]] - vertices[tri[0]]);
                if (dot(n, vertices[tri[0]]) < 0.0)
                    std::swap(tri[1], tri[2]);
                triangles.push_back(tri);
            }

    for (unsigned l = 0; l < level; ++l) {
        std::unordered_map<std::uint64_t, std::size_t> midpoints;
        midpoints.reserve(triangles.size() * 2);
        auto midpoint = [&](std::size_t a, std::size_t b) {
            const std::uint64_t key = (std::uint64_t(std::min(a, b)) << 32) | std::uint64_t(std::max(a, b));
            auto [it, inserted] = midpoints.try_emplace(key, vertices.size());
            if (inserted)
                vertices.push_back(normalized(0.5 * (vertices[a] + vertices[b])));
            return it->second;
        };
        std::vector<TriangleIndices> refined;
        refined.reserve(triangles.size() * 4);
        for (const auto& [a, b, c] : triangles) {
            const std::size_t ab = midpoint(a, b);
            const std::size_t bc = midpoint(b, c);
            const std::size_t ca = midpoint(c, a);
            refined.push_back({a, ab, ca});
            refined.push_back({ab, b, bc});
            refined.push_back({ca, bc, c});
            refined.push_back({ab, bc, ca});
        }
        triangles = std::move(refined);
    }
    return SurfaceMesh(std::move(vertices), std::move(triangles));
}

/// ASCII format: "nv nt", nv lines "x y z", nt lines "a b c" (0-based).
inline void write_mesh(std::ostream& os, const SurfaceMesh& mesh)
{
    os << mesh.num_vertices() << ' ' << mesh.num_triangles() << '\n';
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& v : mesh.vertices())
        os << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const auto& t : mesh.triangles())
        os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

inline SurfaceMesh read_mesh(std::istream& is)
{
    std::size_t nv = 0, nt = 0;
    if (!(is >> nv >> nt))
        throw MeshError("mesh file: missing vertex/triangle counts");
    std::vector<Vec3> vertices(nv);
    for (std::size_t i = 0; i < nv; ++i)
        if (!(is >> vertices[i].x >> vertices[i].y >> vertices[i].z))
            throw MeshError("mesh file: truncated vertex list at vertex " + std::to_string(i));
    std::vector<TriangleIndices> triangles(nt);
    for (std::size_t i = 0; i < nt; ++i)
        if (!(is >> triangles[i][0] >> triangles[i][1] >> triangles[i][2]))
            throw MeshError("mesh file: truncated triangle list at triangle " + std::to_string(i));
    return SurfaceMesh(std::move(vertices), std::move(triangles));
}

inline SurfaceMesh load_mesh(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw MeshError("cannot open mesh file '" + path + "'");
    return read_mesh(in);
}

inline void save_mesh(const std::string& path, const SurfaceMesh& mesh)
{
    std::ofstream out(path);
    if (!out)
        throw MeshError("cannot write mesh file '" + path + "'");
    write_mesh(out, mesh);
}

} // namespace bemgca
