#include "bemgca/gca.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bemgca;

TEST(Aca, RankOneRecoveredExactly)
{
    VectorXc u(6), v(5);
    for (int i = 0; i < 6; ++i)
        u(i) = Complex{1.0 + i, 0.5 * i};
    for (int j = 0; j < 5; ++j)
        v(j) = Complex{2.0 - j, 1.0};
    const MatrixXc a = u * v.transpose();
    const AcaResult r = aca(DenseView{a}, 1e-12);
    EXPECT_EQ(r.rank, 1u);
    EXPECT_LE((a - r.u * r.v.transpose()).norm(), 1e-13 * a.norm());
}

TEST(Aca, ZeroMatrixHasRankZero)
{
    const MatrixXc a = MatrixXc::Zero(4, 4);
    EXPECT_EQ(aca(DenseView{a}, 1e-8).rank, 0u);
}

TEST(Aca, GradedSpectrumWithinTenEpsilonOfSvd)
{
    const Eigen::Index n = 50;
    Eigen::VectorXd sigma(n);
    for (Eigen::Index i = 0; i < n; ++i)
        sigma(i) = std::pow(0.5, double(i));
    const MatrixXc a = oracle::graded_matrix(n, sigma, 3);
    for (double eps : {1e-3, 1e-6, 1e-9}) {
        const AcaResult r = aca(DenseView{a}, eps);
        const double err = (a - r.u * r.v.transpose()).norm() / a.norm();
        EXPECT_LE(err, 10.0 * eps) << "eps=" << eps;
        // The rank is not excessive compared with the optimal one.
        EXPECT_GE(oracle::best_rank_error(a, Eigen::Index(r.rank) - 1) / a.norm(), 0.1 * eps);
    }
}

TEST(Aca, MaxRankCaps)
{
    Eigen::VectorXd sigma = Eigen::VectorXd::Ones(20);
    const MatrixXc a = oracle::graded_matrix(20, sigma, 5);
    EXPECT_EQ(aca(DenseView{a}, 1e-12, 4).rank, 4u);
    EXPECT_THROW(aca(DenseView{a}, 0.0), ConfigError);
}

TEST(GreenSources, CountAndPlacement)
{
    Box b;
    b.extend({0, 0, 0});
    b.extend({1, 2, 1});
    const GreenSourceSet s = green_sources(b, 1.0, 3);
    EXPECT_EQ(s.size(), 2u * 6u * 9u);
    for (std::size_t i = 0; i < s.size(); ++i) {
        // On the surface of the box enlarged by a factor 2 about its center.
        const Vec3 d = s.points[i] - b.center();
        const double m = std::max({std::abs(d.x) / 1.0, std::abs(d.y) / 2.0, std::abs(d.z) / 1.0});
        EXPECT_NEAR(m, 1.0, 1e-14);
        EXPECT_GT(s.weights[i], 0.0);
    }
    EXPECT_THROW(green_sources(b, 0.0, 3), ConfigError);
}

namespace {

struct Level3 {
    SurfaceMesh mesh = build_sphere_mesh(3);
    ClusterTree tree = build_cluster_tree(mesh, 16);
    BlockTree blocks = build_block_tree(tree, tree, 1.0);
};

const Level3& level3()
{
    static const Level3 l;
    return l;
}

} // namespace

TEST(InterpolationOperator, PivotRowsAreIdentity)
{
    const auto& l = level3();
    GcaParams p;
    for (auto trace : {GreenTrace::value, GreenTrace::normal_derivative}) {
        const auto clusters = clusters_needing_basis(l.blocks, true);
        ASSERT_FALSE(clusters.empty());
        const ClusterBasis b = build_cluster_basis(l.mesh, l.tree, clusters, KernelSpec::laplace_dlp(), trace, p);
        for (int c : clusters) {
            const auto& op = b.at(c);
            ASSERT_EQ(op.v.rows(), Eigen::Index(l.tree.node(c).size()));
            for (std::size_t k = 0; k < op.rank(); ++k)
                for (std::size_t j = 0; j < op.rank(); ++j)
                    EXPECT_NEAR(std::abs(op.v(Eigen::Index(op.local_pivots[k]), Eigen::Index(j)) - (k == j ? 1.0 : 0.0)),
                                0.0, 1e-12);
        }
    }
}

TEST(InterpolationOperator, FarFieldReproduction)
{
    const auto& l = level3();
    const oracle::DirectRules rules;
    for (double eps : {1e-3, 1e-5}) {
        GcaParams p;
        p.epsilon = eps;
        for (auto spec : {KernelSpec::laplace_slp(), KernelSpec::helmholtz_slp(3)}) {
            const auto clusters = clusters_needing_basis(l.blocks, true);
            const ClusterBasis b = build_cluster_basis(l.mesh, l.tree, clusters, spec, GreenTrace::value, p);
            double worst = 0.0;
            for (int id : l.blocks.leaves()) {
                const auto& leaf = l.blocks.node(id);
                if (leaf.kind != BlockKind::admissible)
                    continue;
                const auto rows = l.tree.indices(leaf.row), cols = l.tree.indices(leaf.col);
                MatrixXc g(Eigen::Index(rows.size()), Eigen::Index(cols.size()));
                for (std::size_t i = 0; i < rows.size(); ++i)
                    for (std::size_t j = 0; j < cols.size(); ++j)
                        g(Eigen::Index(i), Eigen::Index(j)) = oracle::direct_entry(l.mesh, spec, rows[i], cols[j], rules);
                const auto& op = b.at(leaf.row);
                MatrixXc pivot_rows(Eigen::Index(op.rank()), g.cols());
                for (std::size_t k = 0; k < op.rank(); ++k)
                    pivot_rows.row(Eigen::Index(k)) = g.row(Eigen::Index(op.local_pivots[k]));
                worst = std::max(worst, (g - op.v * pivot_rows).norm() / g.norm());
            }
            EXPECT_LE(worst, 10.0 * eps) << "eps=" << eps;
        }
    }
}

TEST(InterpolationOperator, TwoSidedApproximation)
{
    const auto& l = level3();
    const oracle::DirectRules rules;
    GcaParams p;
    p.epsilon = 1e-5;
    const auto spec = KernelSpec::laplace_dlp();
    const ClusterBasis rb = build_cluster_basis(l.mesh, l.tree, clusters_needing_basis(l.blocks, true), spec,
                                                GreenTrace::value, p);
    const ClusterBasis cb = build_cluster_basis(l.mesh, l.tree, clusters_needing_basis(l.blocks, false), spec,
                                                GreenTrace::normal_derivative, p);
    double worst = 0.0;
    for (int id : l.blocks.leaves()) {
        const auto& leaf = l.blocks.node(id);
        if (leaf.kind != BlockKind::admissible)
            continue;
        const auto rows = l.tree.indices(leaf.row), cols = l.tree.indices(leaf.col);
        MatrixXc g(Eigen::Index(rows.size()), Eigen::Index(cols.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < cols.size(); ++j)
                g(Eigen::Index(i), Eigen::Index(j)) = oracle::direct_entry(l.mesh, spec, rows[i], cols[j], rules);
        const auto& vr = rb.at(leaf.row);
        const auto& vc = cb.at(leaf.col);
        MatrixXc s(Eigen::Index(vr.rank()), Eigen::Index(vc.rank()));
        for (std::size_t i = 0; i < vr.rank(); ++i)
            for (std::size_t j = 0; j < vc.rank(); ++j)
                s(Eigen::Index(i), Eigen::Index(j)) = g(Eigen::Index(vr.local_pivots[i]), Eigen::Index(vc.local_pivots[j]));
        worst = std::max(worst, (g - vr.v * s * vc.v.transpose()).norm() / g.norm());
    }
    EXPECT_LE(worst, 10.0 * p.epsilon);
}

TEST(GreenMatrix, SourceOnPanelIsConfigError)
{
    const SurfaceMesh m = build_sphere_mesh(0);
    GreenSourceSet s;
    s.points.push_back(m.midpoint(0));
    s.normals.push_back({0, 0, 1});
    s.weights.push_back(1.0);
    s.roles.push_back(SourceRole::monopole);
    const std::vector<std::size_t> panels{0};
    EXPECT_THROW(build_green_matrix(m, panels, s, KernelSpec::laplace_slp(), GreenTrace::value, triangle_rule(2)),
                 ConfigError);
}
