#pragma once

// Cluster tree over panels (= piecewise-constant DoFs) and block tree over
// pairs of clusters.

#include "bemgca/errors.hpp"
#include "bemgca/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace bemgca {

struct Box {
    Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            std::numeric_limits<double>::infinity()};
    Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity()};

    void extend(const Vec3& p)
    {
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
        }
    }

    Vec3 extent() const { return hi - lo; }
    Vec3 center() const { return 0.5 * (lo + hi); }
    double diameter() const { return norm(hi - lo); }

    bool contains(const Vec3& p, double tol = 0.0) const
    {
        for (int k = 0; k < 3; ++k)
            if (p[k] < lo[k] - tol || p[k] > hi[k] + tol)
                return false;
        return true;
    }
};

/// Euclidean distance between two axis-aligned boxes (0 if they intersect).
inline double box_distance(const Box& a, const Box& b)
{
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double gap = std::max({0.0, a.lo[k] - b.hi[k], b.lo[k] - a.hi[k]});
        d2 += gap * gap;
    }
    return std::sqrt(d2);
}

struct ClusterNode {
    std::size_t begin = 0; ///< range into ClusterTree::permutation()
    std::size_t end = 0;
    Box box;               ///< encloses every triangle of the cluster entirely
    int children[2] = {-1, -1};
    int level = 0;

    std::size_t size() const { return end - begin; }
    bool is_leaf() const { return children[0] < 0; }
};

class ClusterTree {
public:
    ClusterTree() = default;
    ClusterTree(std::vector<ClusterNode> nodes, std::vector<std::size_t> permutation, std::size_t leaf_size)
        : nodes_(std::move(nodes)), permutation_(std::move(permutation)), leaf_size_(leaf_size)
    {
    }

    const std::vector<ClusterNode>& nodes() const { return nodes_; }
    const ClusterNode& node(int id) const { return nodes_[std::size_t(id)]; }
    std::size_t num_nodes() const { return nodes_.size(); }
    static constexpr int root() { return 0; }

    /// permutation()[k] is the panel at position k of the cluster ordering.
    const std::vector<std::size_t>& permutation() const { return permutation_; }
    std::span<const std::size_t> indices(int id) const
    {
        const auto& n = node(id);
        return std::span<const std::size_t>(permutation_).subspan(n.begin, n.size());
    }

    std::size_t leaf_size() const { return leaf_size_; }
    std::size_t num_dofs() const { return permutation_.size(); }

    int depth() const
    {
        int d = 0;
        for (const auto& n : nodes_)
            d = std::max(d, n.level);
        return d;
    }

    std::vector<int> leaves() const
    {
        std::vector<int> out;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].is_leaf())
                out.push_back(int(i));
        return out;
    }

private:
    std::vector<ClusterNode> nodes_;
    std::vector<std::size_t> permutation_;
    std::size_t leaf_size_ = 0;
};

inline constexpr std::size_t kDefaultLeafSize = 16;

/// Bisection along the longest axis of the cluster box at the median of the
/// triangle midpoints; ties in the coordinate are ordered by panel index.
inline ClusterTree build_cluster_tree(const SurfaceMesh& mesh, std::size_t leaf_size = kDefaultLeafSize)
{
    if (leaf_size < 1)
        throw ConfigError("build_cluster_tree: leaf_size must be at least 1");
    if (mesh.num_triangles() == 0)
        throw MeshError("build_cluster_tree: empty mesh");

    std::vector<std::size_t> perm(mesh.num_triangles());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<Vec3> mids(mesh.num_triangles());
    for (std::size_t t = 0; t < mids.size(); ++t)
        mids[t] = mesh.midpoint(t);

    std::vector<ClusterNode> nodes;
    auto make_node = [&](auto&& self, std::size_t begin, std::size_t end, int level) -> int {
        const int id = int(nodes.size());
        nodes.push_back({});
        ClusterNode node;
        node.begin = begin;
        node.end = end;
        node.level = level;
        for (std::size_t k = begin; k < end; ++k)
            for (auto v : mesh.triangle(perm[k]))
                node.box.extend(mesh.vertex(v));
        if (end - begin > leaf_size) {
            const Vec3 ext = node.box.extent();
            int axis = 0;
            if (ext[1] > ext[axis])
                axis = 1;
            if (ext[2] > ext[axis])
                axis = 2;
            std::sort(perm.begin() + std::ptrdiff_t(begin), perm.begin() + std::ptrdiff_t(end),
                      [&](std::size_t a, std::size_t b) {
                          if (mids[a][axis] != mids[b][axis])
                              return mids[a][axis] < mids[b][axis];
                          return a < b;
                      });
            const std::size_t mid = begin + (end - begin) / 2;
            node.children[0] = self(self, begin, mid, level + 1);
            node.children[1] = self(self, mid, end, level + 1);
        }
        nodes[std::size_t(id)] = node;
        return id;
    };
    make_node(make_node, 0, perm.size(), 0);
    return ClusterTree(std::move(nodes), std::move(perm), leaf_size);
}

inline constexpr double kDefaultEtaAdm = 1.0;

/// max(diam t, diam s) <= eta * dist(t, s); never true for eta <= 0 or touching boxes.
inline bool admissible(const ClusterNode& t, const ClusterNode& s, double eta_adm)
{
    if (!(eta_adm > 0.0))
        return false;
    const double dist = box_distance(t.box, s.box);
    if (!(dist > 0.0))
        return false;
    return std::max(t.box.diameter(), s.box.diameter()) <= eta_adm * dist;
}

enum class BlockKind { admissible, inadmissible, subdivided };

struct BlockNode {
    int row = -1;
    int col = -1;
    BlockKind kind = BlockKind::subdivided;
    std::vector<int> children;

    bool is_leaf() const { return kind != BlockKind::subdivided; }
};

class BlockTree {
public:
    BlockTree() = default;
    explicit BlockTree(std::vector<BlockNode> nodes) : nodes_(std::move(nodes))
    {
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].is_leaf())
                leaves_.push_back(int(i));
    }

    const std::vector<BlockNode>& nodes() const { return nodes_; }
    const BlockNode& node(int id) const { return nodes_[std::size_t(id)]; }
    /// Leaf node ids in preorder.
    const std::vector<int>& leaves() const { return leaves_; }

    std::size_t count(BlockKind kind) const
    {
        return std::size_t(std::count_if(leaves_.begin(), leaves_.end(),
                                         [&](int id) { return nodes_[std::size_t(id)].kind == kind; }));
    }

private:
    std::vector<BlockNode> nodes_;
    std::vector<int> leaves_;
};

inline BlockTree build_block_tree(const ClusterTree& rows, const ClusterTree& cols, double eta_adm = kDefaultEtaAdm)
{
    std::vector<BlockNode> nodes;
    auto build = [&](auto&& self, int t, int s) -> int {
        const int id = int(nodes.size());
        nodes.push_back({t, s, BlockKind::subdivided, {}});
        const auto& tn = rows.node(t);
        const auto& sn = cols.node(s);
        if (admissible(tn, sn, eta_adm)) {
            nodes[std::size_t(id)].kind = BlockKind::admissible;
            return id;
        }
        if (tn.is_leaf() && sn.is_leaf()) {
            nodes[std::size_t(id)].kind = BlockKind::inadmissible;
            return id;
        }
        std::vector<int> row_parts = tn.is_leaf() ? std::vector<int>{t} : std::vector<int>{tn.children[0], tn.children[1]};
        std::vector<int> col_parts = sn.is_leaf() ? std::vector<int>{s} : std::vector<int>{sn.children[0], sn.children[1]};
        std::vector<int> kids;
        for (int r : row_parts)
            for (int c : col_parts)
                kids.push_back(self(self, r, c));
        nodes[std::size_t(id)].children = std::move(kids);
        return id;
    };
    build(build, ClusterTree::root(), ClusterTree::root());
    return BlockTree(std::move(nodes));
}

} // namespace bemgca
