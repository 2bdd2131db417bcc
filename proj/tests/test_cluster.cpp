#include "bemgca/cluster.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bemgca;

TEST(ClusterTree, SingleNodeForSmallMesh)
{
    const ClusterTree t = build_cluster_tree(build_sphere_mesh(0), 8);
    EXPECT_EQ(t.num_nodes(), 1u);
    EXPECT_TRUE(t.node(0).is_leaf());
}

TEST(ClusterTree, StructuralInvariants)
{
    const SurfaceMesh m = build_sphere_mesh(4);
    const ClusterTree t = build_cluster_tree(m, 16);
    EXPECT_GE(t.depth(), 7);
    std::vector<int> seen(m.num_triangles(), 0);
    for (auto p : t.permutation())
        ++seen[p];
    for (int s : seen)
        EXPECT_EQ(s, 1);
    for (std::size_t id = 0; id < t.num_nodes(); ++id) {
        const auto& n = t.node(int(id));
        for (auto p : t.indices(int(id)))
            for (auto v : m.triangle(p))
                EXPECT_TRUE(n.box.contains(m.vertex(v)));
        if (n.is_leaf()) {
            EXPECT_LE(n.size(), 16u);
        } else {
            const auto& a = t.node(n.children[0]);
            const auto& b = t.node(n.children[1]);
            EXPECT_EQ(a.begin, n.begin);
            EXPECT_EQ(a.end, b.begin);
            EXPECT_EQ(b.end, n.end);
            EXPECT_EQ(a.level, n.level + 1);
        }
    }
}

TEST(ClusterTree, RejectsZeroLeafSize)
{
    EXPECT_THROW(build_cluster_tree(build_sphere_mesh(1), 0), ConfigError);
}

TEST(Admissibility, Examples)
{
    ClusterNode a, b;
    a.box.extend({0, 0, 0});
    a.box.extend({1, 1, 1});
    b.box.extend({11, 0, 0});
    b.box.extend({12, 1, 1});
    EXPECT_TRUE(admissible(a, b, 1.0));
    EXPECT_FALSE(admissible(a, b, 0.0));
    EXPECT_FALSE(admissible(a, a, 100.0));
    EXPECT_FALSE(admissible(a, b, 0.1));
}

TEST(BlockTree, LeavesPartitionIndexSquare)
{
    const SurfaceMesh m = build_sphere_mesh(3);
    const ClusterTree t = build_cluster_tree(m, 16);
    const BlockTree b = build_block_tree(t, t, 1.0);
    const std::size_t n = m.num_triangles();
    std::vector<int> cover(n * n, 0);
    for (int id : b.leaves()) {
        const auto& leaf = b.node(id);
        for (auto i : t.indices(leaf.row))
            for (auto j : t.indices(leaf.col))
                ++cover[i * n + j];
        if (leaf.kind == BlockKind::inadmissible) {
            EXPECT_TRUE(t.node(leaf.row).is_leaf());
            EXPECT_TRUE(t.node(leaf.col).is_leaf());
        } else {
            EXPECT_TRUE(admissible(t.node(leaf.row), t.node(leaf.col), 1.0));
        }
    }
    for (int c : cover)
        ASSERT_EQ(c, 1);
    EXPECT_GT(b.count(BlockKind::admissible), 0u);
}

TEST(BlockTree, AdmissibleLeavesHaveNoTouchingPairs)
{
    const SurfaceMesh m = build_sphere_mesh(3);
    const ClusterTree t = build_cluster_tree(m, 16);
    const BlockTree b = build_block_tree(t, t, 1.0);
    for (int id : b.leaves()) {
        const auto& leaf = b.node(id);
        if (leaf.kind != BlockKind::admissible)
            continue;
        for (auto i : t.indices(leaf.row))
            for (auto j : t.indices(leaf.col))
                ASSERT_EQ(oracle::shared_vertices(m, i, j), 0);
    }
}

TEST(BlockTree, ZeroEtaGivesOnlyInadmissibleLeaves)
{
    const SurfaceMesh m = build_sphere_mesh(2);
    const ClusterTree t = build_cluster_tree(m, 16);
    const BlockTree b = build_block_tree(t, t, 0.0);
    EXPECT_EQ(b.count(BlockKind::admissible), 0u);
    const std::size_t leaves = t.leaves().size();
    EXPECT_EQ(b.count(BlockKind::inadmissible), leaves * leaves);
}

TEST(BlockTree, SingleNodeInadmissible)
{
    const ClusterTree t = build_cluster_tree(build_sphere_mesh(0), 8);
    const BlockTree b = build_block_tree(t, t, 1.0);
    ASSERT_EQ(b.leaves().size(), 1u);
    EXPECT_EQ(b.node(b.leaves()[0]).kind, BlockKind::inadmissible);
}
