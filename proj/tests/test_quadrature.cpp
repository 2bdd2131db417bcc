#include "bemgca/mesh.hpp"
#include "bemgca/quadrature.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace bemgca;

namespace {

/// 4D rule applied to a constant integrand over reference x reference.
double rule_volume(const QuadRule4D& r)
{
    double s = 0.0;
    for (double w : r.weights)
        s += w;
    return s;
}

} // namespace

TEST(GaussLegendre, ExactForDegreeTwoNMinusOne)
{
    for (int n = 1; n <= 12; ++n) {
        const Rule1D g = gauss_legendre(n);
        ASSERT_EQ(g.size(), std::size_t(n));
        for (int p = 0; p <= 2 * n - 1; ++p) {
            double s = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i)
                s += g.weights[i] * std::pow(g.points[i], p);
            EXPECT_NEAR(s, 1.0 / (p + 1), 1e-14) << "n=" << n << " p=" << p;
        }
    }
}

TEST(GaussLegendre, RejectsOutOfRange)
{
    EXPECT_THROW(gauss_legendre(0), ConfigError);
    EXPECT_THROW(gauss_legendre(kMaxGaussPoints + 1), ConfigError);
}

TEST(TriangleRule, IntegratesMonomials)
{
    // int_{0<=t<=s<=1} s^a t^b = 1 / ((b + 1)(a + b + 2))
    const TriangleRule r = triangle_rule(4);
    for (int a = 0; a <= 3; ++a)
        for (int b = 0; b <= 3; ++b) {
            double s = 0.0;
            for (std::size_t q = 0; q < r.size(); ++q)
                s += r.weights[q] * std::pow(r.s[q], a) * std::pow(r.t[q], b);
            EXPECT_NEAR(s, 1.0 / ((b + 1.0) * (a + b + 2.0)), 1e-14);
        }
}

TEST(Rule4D, ConstantKernelGivesQuarter)
{
    for (auto kind : kAllPairCases)
        for (int n : {2, 3, 5})
            EXPECT_NEAR(rule_volume(build_rule(kind, n)), 0.25, 1e-13) << to_string(kind) << " n=" << n;
}

TEST(Rule4D, PointCounts)
{
    for (int n : {2, 3, 4}) {
        const std::size_t n4 = std::size_t(n * n * n * n);
        EXPECT_EQ(build_rule(PairCase::disjoint, n).size(), n4);
        EXPECT_EQ(build_rule(PairCase::vertex, n).size(), 2 * n4);
        EXPECT_EQ(build_rule(PairCase::edge, n).size(), 5 * n4);
        EXPECT_EQ(build_rule(PairCase::identical, n).size(), 6 * n4);
    }
}

TEST(Rule4D, PointsInsideReferenceTriangle)
{
    for (auto kind : kAllPairCases) {
        const QuadRule4D r = build_rule(kind, 4);
        for (std::size_t q = 0; q < r.size(); ++q) {
            EXPECT_LE(r.xt[q], r.xs[q] + 1e-15);
            EXPECT_LE(r.yt[q], r.ys[q] + 1e-15);
            EXPECT_GE(r.xt[q], 0.0);
            EXPECT_LE(r.xs[q], 1.0);
            EXPECT_GT(r.weights[q], 0.0);
        }
    }
}

TEST(Rule4D, SingularRulesMatchDisjointOnSmoothIntegrand)
{
    // A smooth integrand over reference x reference is integrated by every rule.
    const auto f = [](double xs, double xt, double ys, double yt) {
        return std::exp(xs - 0.5 * xt) * std::cos(ys + 2.0 * yt) + xs * yt;
    };
    const auto apply = [&](const QuadRule4D& r) {
        double s = 0.0;
        for (std::size_t q = 0; q < r.size(); ++q)
            s += r.weights[q] * f(r.xs[q], r.xt[q], r.ys[q], r.yt[q]);
        return s;
    };
    const double ref = apply(build_rule(PairCase::disjoint, 10));
    for (auto kind : {PairCase::vertex, PairCase::edge, PairCase::identical})
        EXPECT_NEAR(apply(build_rule(kind, 8)), ref, 1e-11) << to_string(kind);
}

TEST(Rule4D, InvalidOrder)
{
    EXPECT_THROW(build_rule(PairCase::edge, 0), ConfigError);
    EXPECT_THROW(build_rule(PairCase::edge, kMaxRuleOrder + 1), ConfigError);
}

TEST(RuleCache, BuildsOncePerKey)
{
    auto& cache = RuleCache::instance();
    const auto a = cache.get(PairCase::edge, 7);
    const std::size_t builds = cache.builds();
    const auto b = cache.get(PairCase::edge, 7);
    EXPECT_EQ(a.get(), b.get());
    EXPECT_EQ(cache.builds(), builds);
}

TEST(ClassifyPair, CasesOnSphere)
{
    const SurfaceMesh m = build_sphere_mesh(2);
    for (std::size_t a = 0; a < m.num_triangles(); ++a)
        for (std::size_t b = 0; b < m.num_triangles(); ++b) {
            const auto c = classify_pair(m, a, b);
            const int shared = oracle::shared_vertices(m, a, b);
            const PairCase expected = a == b        ? PairCase::identical
                                      : shared == 2 ? PairCase::edge
                                      : shared == 1 ? PairCase::vertex
                                                    : PairCase::disjoint;
            ASSERT_EQ(c.kind, expected);
            if (c.kind == PairCase::vertex || c.kind == PairCase::edge) {
                // Shared vertices sit at the same reference corners of both charts.
                const AffineChart cx = chart(m, a, c.perm_x), cy = chart(m, b, c.perm_y);
                EXPECT_EQ(cx(0, 0), cy(0, 0));
                if (c.kind == PairCase::edge)
                    EXPECT_EQ(cx(1, 0), cy(1, 0));
            }
        }
}

TEST(ClassifyPair, DuplicateTriangleIsMeshError)
{
    const SurfaceMesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}, {0, 2, 1}});
    EXPECT_THROW(classify_pair(m, 0, 1), MeshError);
}

TEST(IntegratePair, SelfIntegralConvergesToClosedForm)
{
    const Vec3 p0{0, 0, 0}, p1{1, 0, 0}, p2{0, 1, 0};
    const SurfaceMesh m({p0, p1, p2}, {{0, 1, 2}});
    const double exact = oracle::self_coulomb_integral(p0, p1, p2) / (4.0 * std::numbers::pi);
    EXPECT_NEAR(oracle::self_coulomb_integral(p0, p1, p2), 1.0030658847, 1e-9);
    double previous = 1.0;
    for (int n = 3; n <= 10; ++n) {
        const Complex v = integrate_pair(chart(m, 0), chart(m, 0), KernelSpec::laplace_slp(), m.normal(0),
                                         build_rule(PairCase::identical, n));
        const double err = std::abs(v.real() - exact) / exact;
        EXPECT_LT(err, previous) << "n=" << n;
        previous = err;
        if (n == 8)
            EXPECT_LE(err, 1e-4);
    }
}

TEST(IntegratePair, EdgeAndVertexPairsConverge)
{
    const SurfaceMesh m = build_sphere_mesh(1);
    for (std::size_t b = 1; b < m.num_triangles(); ++b) {
        const auto c = classify_pair(m, 0, b);
        if (c.kind == PairCase::disjoint)
            continue;
        const auto value = [&](int n) {
            return integrate_pair(chart(m, 0, c.perm_x), chart(m, b, c.perm_y), KernelSpec::laplace_slp(),
                                  m.normal(b), build_rule(c.kind, n));
        };
        const Complex ref = value(12);
        const double e5 = std::abs(value(5) - ref), e8 = std::abs(value(8) - ref);
        EXPECT_LE(e5, 1e-5 * std::abs(ref)) << to_string(c.kind);
        EXPECT_LT(e8, e5) << to_string(c.kind);
    }
}

TEST(IntegratePair, DisjointMatchesProductRule)
{
    const SurfaceMesh m = build_sphere_mesh(1);
    const std::size_t a = 0, b = m.num_triangles() - 1;
    ASSERT_EQ(classify_pair(m, a, b).kind, PairCase::disjoint);
    const TriangleRule t = triangle_rule(6);
    const AffineChart ca = chart(m, a), cb = chart(m, b);
    Complex ref{0.0, 0.0};
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = 0; j < t.size(); ++j)
            ref += t.weights[i] * t.weights[j] *
                   eval(KernelSpec::laplace_slp(), ca(t.s[i], t.t[i]), cb(t.s[j], t.t[j]), m.normal(b));
    ref *= ca.gramian * cb.gramian;
    const Complex v = integrate_pair(ca, cb, KernelSpec::laplace_slp(), m.normal(b), build_rule(PairCase::disjoint, 6));
    EXPECT_NEAR(std::abs(v - ref), 0.0, 1e-15);
}

TEST(QuadratureOrders, Defaults)
{
    const QuadratureOrders o;
    EXPECT_EQ(o.for_case(PairCase::disjoint), 3);
    EXPECT_EQ(o.for_case(PairCase::identical), 5);
}
