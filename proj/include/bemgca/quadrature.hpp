#pragma once

// Quadrature for Galerkin panel-pair integrals over the reference triangle
// {0 <= t <= s <= 1}:
//
//  * Gauss-Legendre rules on [0,1] and the Duffy-collapsed triangle rule,
//  * four-dimensional rules for the four panel-pair cases. The disjoint case
//    uses the Duffy transformation in both variables; the singular cases use
//    the Sauter-Schwab coordinate transformations (2, 5 and 6 sub-integrals
//    for common vertex, common edge and identical panels),
//  * classification of a panel pair with vertex alignment so that shared
//    vertices occupy the leading chart slots,
//  * evaluation of one panel-pair integral.
//
// Singular-rule layout. With xi = point in [0,1] and (e1, e2, e3) in [0,1]^3
// the sub-integrals are, in storage order (x-point, y-point, weight factor):
//
//   vertex    1: (xi, xi e1)                  (xi e2, xi e2 e3)               xi^3 e2
//             2: (xi e2, xi e2 e3)            (xi, xi e1)                     xi^3 e2
//   edge      1: (xi, xi e1 e3)               (xi(1-e1 e2), xi e1(1-e2))      xi^3 e1^2
//             2: (xi, xi e1)                  (xi(1-e1e2e3), xi e1 e2(1-e3))  xi^3 e1^2 e2
//             3: (xi(1-e1 e2), xi e1(1-e2))   (xi, xi e1 e2 e3)               xi^3 e1^2 e2
//             4: (xi(1-e1e2e3), xi e1e2(1-e3))(xi, xi e1)                     xi^3 e1^2 e2
//             5: (xi(1-e1e2e3), xi e1(1-e2e3))(xi, xi e1 e2)                  xi^3 e1^2 e2
//   identical (weight xi^3 e1^2 e2 throughout)
//             1: (xi, xi(1-e1+e1e2))          (xi(1-e1e2e3), xi(1-e1))
//             2: (xi(1-e1e2e3), xi(1-e1))     (xi, xi(1-e1+e1e2))
//             3: (xi, xi e1(1-e2+e2e3))       (xi(1-e1e2), xi e1(1-e2))
//             4: (xi(1-e1e2), xi e1(1-e2))    (xi, xi e1(1-e2+e2e3))
//             5: (xi(1-e1e2e3), xi e1(1-e2e3))(xi, xi e1(1-e2))
//             6: (xi, xi e1(1-e2))            (xi(1-e1e2e3), xi e1(1-e2e3))
//
// The common-vertex rule assumes both charts map the origin to the shared
// vertex; the common-edge rule assumes both charts map the reference edge
// (0,0)-(1,0) to the shared edge with matching orientation.

#include "bemgca/errors.hpp"
#include "bemgca/kernels.hpp"
#include "bemgca/mesh.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace bemgca {

enum class PairCase : std::uint8_t { disjoint = 0, vertex = 1, edge = 2, identical = 3 };

inline constexpr std::array<PairCase, 4> kAllPairCases{PairCase::disjoint, PairCase::vertex, PairCase::edge,
                                                       PairCase::identical};

inline const char* to_string(PairCase c)
{
    switch (c) {
    case PairCase::disjoint: return "disjoint";
    case PairCase::vertex: return "vertex";
    case PairCase::edge: return "edge";
    case PairCase::identical: return "identical";
    }
    return "?";
}

/// Number of four-dimensional sub-integrals of each case.
constexpr std::size_t sub_integral_count(PairCase c)
{
    switch (c) {
    case PairCase::disjoint: return 1;
    case PairCase::vertex: return 2;
    case PairCase::edge: return 5;
    case PairCase::identical: return 6;
    }
    return 0;
}

inline constexpr int kMaxGaussPoints = 32;
inline constexpr int kMaxRuleOrder = 12;

struct Rule1D {
    std::vector<double> points;
    std::vector<double> weights;

    std::size_t size() const { return points.size(); }
};

/// n-point Gauss-Legendre rule on [0,1], points ascending.
inline Rule1D gauss_legendre(int n)
{
    if (n < 1 || n > kMaxGaussPoints)
        throw ConfigError("gauss_legendre: point count " + std::to_string(n) + " outside [1, " +
                          std::to_string(kMaxGaussPoints) + "]");
    Rule1D rule;
    rule.points.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Newton iteration on P_n starting from the Chebyshev-like guess.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root; map [-1,1] -> [0,1].
        rule.points[n - 1 - i] = 0.5 * (1.0 + x);
        rule.points[i] = 0.5 * (1.0 - x);
        rule.weights[n - 1 - i] = 0.5 * w;
        rule.weights[i] = 0.5 * w;
    }
    if (n % 2 == 1)
        rule.points[n / 2] = 0.5;
    return rule;
}

/// Two-dimensional rule on the reference triangle from the Duffy map
/// (u, v) -> (u, u v); weights sum to 1/2.
struct TriangleRule {
    std::vector<double> s;
    std::vector<double> t;
    std::vector<double> weights;

    std::size_t size() const { return weights.size(); }
};

inline TriangleRule triangle_rule(int n)
{
    const Rule1D g = gauss_legendre(n);
    TriangleRule rule;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < g.size(); ++j) {
            rule.s.push_back(g.points[i]);
            rule.t.push_back(g.points[i] * g.points[j]);
            rule.weights.push_back(g.weights[i] * g.weights[j] * g.points[i]);
        }
    return rule;
}

/// Fully expanded 4D rule: test points (xs, xt), trial points (ys, yt), weights
/// including every Jacobian factor. Integrates over reference x reference.
struct QuadRule4D {
    PairCase kind = PairCase::disjoint;
    int order = 0;
    std::vector<double> xs, xt, ys, yt, weights;

    std::size_t size() const { return weights.size(); }
};

namespace detail {

struct RefPair {
    double xs, xt, ys, yt, factor;
};

inline RefPair singular_point(PairCase kind, std::size_t term, double xi, double e1, double e2, double e3)
{
    const double xi3 = xi * xi * xi;
    switch (kind) {
    case PairCase::vertex: {
        const double w = xi3 * e2;
        if (term == 0)
            return {xi, xi * e1, xi * e2, xi * e2 * e3, w};
        return {xi * e2, xi * e2 * e3, xi, xi * e1, w};
    }
    case PairCase::edge: {
        const double w = xi3 * e1 * e1 * e2;
        switch (term) {
        case 0: return {xi, xi * e1 * e3, xi * (1 - e1 * e2), xi * e1 * (1 - e2), xi3 * e1 * e1};
        case 1: return {xi, xi * e1, xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3), w};
        case 2: return {xi * (1 - e1 * e2), xi * e1 * (1 - e2), xi, xi * e1 * e2 * e3, w};
        case 3: return {xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3), xi, xi * e1, w};
        default: return {xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3), xi, xi * e1 * e2, w};
        }
    }
    case PairCase::identical: {
        const double w = xi3 * e1 * e1 * e2;
        switch (term) {
        case 0: return {xi, xi * (1 - e1 + e1 * e2), xi * (1 - e1 * e2 * e3), xi * (1 - e1), w};
        case 1: return {xi * (1 - e1 * e2 * e3), xi * (1 - e1), xi, xi * (1 - e1 + e1 * e2), w};
        case 2: return {xi, xi * e1 * (1 - e2 + e2 * e3), xi * (1 - e1 * e2), xi * e1 * (1 - e2), w};
        case 3: return {xi * (1 - e1 * e2), xi * e1 * (1 - e2), xi, xi * e1 * (1 - e2 + e2 * e3), w};
        case 4: return {xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3), xi, xi * e1 * (1 - e2), w};
        default: return {xi, xi * e1 * (1 - e2), xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3), w};
        }
    }
    case PairCase::disjoint: break;
    }
    throw std::logic_error("singular_point: disjoint case has no singular transform");
}

} // namespace detail

/// Builds the expanded rule of `kind` with base order n (n^4 points per sub-integral).
inline QuadRule4D build_rule(PairCase kind, int n)
{
    if (n < 1 || n > kMaxRuleOrder)
        throw ConfigError("build_rule: order " + std::to_string(n) + " outside [1, " +
                          std::to_string(kMaxRuleOrder) + "]");
    const Rule1D g = gauss_legendre(n);
    QuadRule4D rule;
    rule.kind = kind;
    rule.order = n;
    const std::size_t count = sub_integral_count(kind) * std::size_t(n) * n * n * n;
    rule.xs.reserve(count);
    rule.xt.reserve(count);
    rule.ys.reserve(count);
    rule.yt.reserve(count);
    rule.weights.reserve(count);
    for (std::size_t term = 0; term < sub_integral_count(kind); ++term)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l) {
                        const double w = g.weights[i] * g.weights[j] * g.weights[k] * g.weights[l];
                        const double a = g.points[i], b = g.points[j], c = g.points[k], d = g.points[l];
                        if (kind == PairCase::disjoint) {
                            rule.xs.push_back(a);
                            rule.xt.push_back(a * b);
                            rule.ys.push_back(c);
                            rule.yt.push_back(c * d);
                            rule.weights.push_back(w * a * c);
                            continue;
                        }
                        const auto p = detail::singular_point(kind, term, a, b, c, d);
                        if (p.xs == p.ys && p.xt == p.yt)
                            throw std::logic_error(std::string("build_rule: ") + to_string(kind) +
                                                   " rule produced coincident reference points");
                        rule.xs.push_back(p.xs);
                        rule.xt.push_back(p.xt);
                        rule.ys.push_back(p.ys);
                        rule.yt.push_back(p.yt);
                        rule.weights.push_back(w * p.factor);
                    }
    return rule;
}

/// Process-wide memo of expanded rules keyed by (case, order).
class RuleCache {
public:
    static RuleCache& instance()
    {
        static RuleCache cache;
        return cache;
    }

    std::shared_ptr<const QuadRule4D> get(PairCase kind, int order)
    {
        lookups_.fetch_add(1, std::memory_order_relaxed);
        std::lock_guard lock(mutex_);
        auto& slot = rules_[{kind, order}];
        if (!slot) {
            slot = std::make_shared<const QuadRule4D>(build_rule(kind, order));
            builds_.fetch_add(1, std::memory_order_relaxed);
        }
        return slot;
    }

    std::size_t lookups() const { return lookups_.load(); }
    std::size_t builds() const { return builds_.load(); }

private:
    RuleCache() = default;

    std::mutex mutex_;
    std::map<std::pair<PairCase, int>, std::shared_ptr<const QuadRule4D>> rules_;
    std::atomic<std::size_t> lookups_{0};
    std::atomic<std::size_t> builds_{0};
};

struct PairClassification {
    PairCase kind = PairCase::disjoint;
    Permutation perm_x = kIdentityPermutation;
    Permutation perm_y = kIdentityPermutation;
};

/// Classifies a panel pair by shared vertex indices. Shared vertices occupy the
/// leading permutation slots in the order they appear in `tri_a`.
inline PairClassification classify_pair(const SurfaceMesh& mesh, std::size_t tri_a, std::size_t tri_b)
{
    if (tri_a >= mesh.num_triangles() || tri_b >= mesh.num_triangles())
        throw std::out_of_range("classify_pair: triangle index out of range");
    if (tri_a == tri_b)
        return {PairCase::identical, kIdentityPermutation, kIdentityPermutation};

    const auto& a = mesh.triangle(tri_a);
    const auto& b = mesh.triangle(tri_b);
    std::array<std::uint8_t, 3> pos_a{}, pos_b{};
    int shared = 0;
    for (std::uint8_t i = 0; i < 3; ++i)
        for (std::uint8_t j = 0; j < 3; ++j)
            if (a[i] == b[j]) {
                pos_a[shared] = i;
                pos_b[shared] = j;
                ++shared;
            }

    PairClassification c;
    switch (shared) {
    case 0: return c;
    case 1:
        c.kind = PairCase::vertex;
        c.perm_x = {pos_a[0], std::uint8_t((pos_a[0] + 1) % 3), std::uint8_t((pos_a[0] + 2) % 3)};
        c.perm_y = {pos_b[0], std::uint8_t((pos_b[0] + 1) % 3), std::uint8_t((pos_b[0] + 2) % 3)};
        return c;
    case 2:
        c.kind = PairCase::edge;
        c.perm_x = {pos_a[0], pos_a[1], std::uint8_t(3 - pos_a[0] - pos_a[1])};
        c.perm_y = {pos_b[0], pos_b[1], std::uint8_t(3 - pos_b[0] - pos_b[1])};
        return c;
    default:
        throw MeshError("classify_pair: distinct triangles " + std::to_string(tri_a) + " and " +
                        std::to_string(tri_b) + " share all three vertices");
    }
}

/// Piecewise-constant basis function on the reference triangle.
struct ConstantBasis {
    constexpr double operator()(double, double) const { return 1.0; }
};

/// gramian_x * gramian_y * sum_q w_q phi(x_q) g(Phi_x(x_q), Phi_y(y_q)) psi(y_q).
/// Charts must already be aligned for the rule's case.
template <class BasisX = ConstantBasis, class BasisY = ConstantBasis>
Complex integrate_pair(const AffineChart& cx, const AffineChart& cy, const KernelSpec& spec, const Vec3& normal_y,
                       const QuadRule4D& rule, BasisX basis_x = {}, BasisY basis_y = {})
{
    Complex acc{0.0, 0.0};
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const Vec3 x = cx(rule.xs[q], rule.xt[q]);
        const Vec3 y = cy(rule.ys[q], rule.yt[q]);
        Complex value = eval(spec, x, y, normal_y);
        if constexpr (!std::is_same_v<BasisX, ConstantBasis> || !std::is_same_v<BasisY, ConstantBasis>)
            value *= basis_x(rule.xs[q], rule.xt[q]) * basis_y(rule.ys[q], rule.yt[q]);
        acc += rule.weights[q] * value;
    }
    return (cx.gramian * cy.gramian) * acc;
}

/// Default base orders: Duffy (disjoint) and Sauter-Schwab (singular) cases.
struct QuadratureOrders {
    int disjoint = 3;
    int singular = 5;

    int for_case(PairCase c) const { return c == PairCase::disjoint ? disjoint : singular; }
};

} // namespace bemgca
