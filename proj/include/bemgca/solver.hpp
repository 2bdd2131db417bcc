#pragma once

// Krylov solvers and the two model problems on closed surfaces: the interior
// Laplace Dirichlet-to-Neumann map and the exterior Helmholtz Dirichlet
// problem in the Brakhage-Werner (combined field) formulation.

#include "bemgca/assembly.hpp"
#include "bemgca/errors.hpp"
#include "bemgca/gca.hpp"
#include "bemgca/kernels.hpp"
#include "bemgca/mesh.hpp"
#include "bemgca/quadrature.hpp"
#include "bemgca/scheduler.hpp"

#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <span>
#include <vector>

namespace bemgca {

using CVector = std::vector<Complex>;

struct LinearOperator {
    std::size_t dim = 0;
    std::function<CVector(std::span<const Complex>)> apply;
    bool hermitian = false;
    bool positive_definite = false;

    CVector operator()(std::span<const Complex> x) const
    {
        if (x.size() != dim)
            throw std::invalid_argument("LinearOperator: vector length " + std::to_string(x.size()) + " != " +
                                        std::to_string(dim));
        return apply(x);
    }
};

inline LinearOperator as_operator(const MatrixXc& a, bool hermitian = false, bool positive_definite = false)
{
    return {std::size_t(a.rows()),
            [&a](std::span<const Complex> x) {
                const VectorXc y = a * Eigen::Map<const VectorXc>(x.data(), Eigen::Index(x.size()));
                return CVector(y.data(), y.data() + y.size());
            },
            hermitian, positive_definite};
}

inline LinearOperator as_operator(const GCAMatrix& a, bool hermitian = false, bool positive_definite = false)
{
    return {a.rows(), [&a](std::span<const Complex> x) { return a.matvec(x); }, hermitian, positive_definite};
}

namespace detail {

inline Complex dotc(std::span<const Complex> a, std::span<const Complex> b)
{
    Complex s{0.0, 0.0};
    for (std::size_t i = 0; i < a.size(); ++i)
        s += std::conj(a[i]) * b[i];
    return s;
}

inline double norm2(std::span<const Complex> a) { return std::sqrt(dotc(a, a).real()); }

} // namespace detail

struct SolveResult {
    CVector x;
    std::size_t iterations = 0;
    std::vector<double> residuals; ///< relative Euclidean residuals, starting with the initial one
    bool converged = false;
    std::string method;
};

/// Conjugate gradients from x0 = 0. Stops at ||b - Ax|| <= tol ||b|| or maxit.
inline SolveResult cg_solve(const LinearOperator& a, std::span<const Complex> b, double tol = 1e-8,
                            std::size_t maxit = 1000)
{
    if (!a.hermitian || !a.positive_definite)
        throw ConfigError("cg_solve: operator is not flagged hermitian positive definite");
    const std::size_t n = a.dim;
    SolveResult res;
    res.method = "cg";
    res.x.assign(n, Complex{0.0, 0.0});
    const double bnorm = detail::norm2(b);
    if (bnorm == 0.0) {
        res.residuals.push_back(0.0);
        res.converged = true;
        return res;
    }
    CVector r(b.begin(), b.end()), p = r;
    double rr = detail::dotc(r, r).real();
    res.residuals.push_back(std::sqrt(rr) / bnorm);
    while (res.iterations < maxit && res.residuals.back() > tol) {
        const CVector ap = a(p);
        const double pap = detail::dotc(p, ap).real();
        if (!(pap > 0.0))
            throw NumericalError("cg_solve: p^H A p = " + std::to_string(pap) + " <= 0, operator is not definite");
        const double alpha = rr / pap;
        for (std::size_t i = 0; i < n; ++i) {
            res.x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        const double rr_new = detail::dotc(r, r).real();
        ++res.iterations;
        res.residuals.push_back(std::sqrt(rr_new) / bnorm);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < n; ++i)
            p[i] = r[i] + beta * p[i];
    }
    res.converged = res.residuals.back() <= tol;
    return res;
}

/// Unrestarted GMRES (modified Gram-Schmidt, Givens rotations) from x0 = 0.
inline SolveResult gmres_solve(const LinearOperator& a, std::span<const Complex> b, double tol = 1e-8,
                               std::size_t maxit = 1000)
{
    const std::size_t n = a.dim;
    SolveResult res;
    res.method = "gmres";
    res.x.assign(n, Complex{0.0, 0.0});
    const double bnorm = detail::norm2(b);
    res.residuals.push_back(bnorm == 0.0 ? 0.0 : 1.0);
    if (bnorm == 0.0) {
        res.converged = true;
        return res;
    }
    maxit = std::min(maxit, n);
    std::vector<CVector> q{CVector(b.begin(), b.end())};
    for (auto& v : q[0])
        v /= bnorm;
    std::vector<std::vector<Complex>> h; // column j has j + 2 entries
    std::vector<double> cs;
    std::vector<Complex> sn;
    std::vector<Complex> g{Complex{bnorm, 0.0}};

    std::size_t k = 0;
    while (k < maxit && res.residuals.back() > tol) {
        CVector w = a(q[k]);
        std::vector<Complex> col(k + 2, Complex{0.0, 0.0});
        for (std::size_t i = 0; i <= k; ++i) {
            col[i] = detail::dotc(q[i], w);
            for (std::size_t j = 0; j < n; ++j)
                w[j] -= col[i] * q[i][j];
        }
        const double wn = detail::norm2(w);
        col[k + 1] = wn;
        for (std::size_t i = 0; i < k; ++i) {
            const Complex t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -std::conj(sn[i]) * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        const double den = std::hypot(std::abs(col[k]), wn);
        if (den == 0.0)
            throw NumericalError("gmres_solve: breakdown with a singular Hessenberg column");
        const double c = std::abs(col[k]) / den;
        const Complex s = std::abs(col[k]) == 0.0 ? Complex{1.0, 0.0} : (col[k] / std::abs(col[k])) * (wn / den);
        cs.push_back(c);
        sn.push_back(s);
        col[k] = c * col[k] + s * col[k + 1];
        col[k + 1] = 0.0;
        g.push_back(-std::conj(s) * g[k]);
        g[k] = c * g[k];
        h.push_back(std::move(col));
        ++k;
        res.residuals.push_back(std::abs(g[k]) / bnorm);
        if (wn == 0.0)
            break; // happy breakdown: exact solution in the current space
        for (auto& v : w)
            v /= wn;
        q.push_back(std::move(w));
    }
    std::vector<Complex> y(k);
    for (std::size_t i = k; i-- > 0;) {
        Complex s = g[i];
        for (std::size_t j = i + 1; j < k; ++j)
            s -= h[j][i] * y[j];
        y[i] = s / h[i][i];
    }
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < n; ++i)
            res.x[i] += y[j] * q[j][i];
    res.iterations = k;
    res.converged = res.residuals.back() <= tol;
    return res;
}

/// CG for operators flagged hermitian positive definite, GMRES otherwise.
inline SolveResult solve(const LinearOperator& a, std::span<const Complex> b, double tol = 1e-8,
                         std::size_t maxit = 1000)
{
    if (a.hermitian && a.positive_definite)
        return cg_solve(a, b, tol, maxit);
    return gmres_solve(a, b, tol, maxit);
}

// ---------------------------------------------------------------------------
// Boundary data
// ---------------------------------------------------------------------------

using ScalarField = std::function<Complex(const Vec3&)>;
using NormalField = std::function<Complex(const Vec3& x, const Vec3& n)>;

inline constexpr int kBoundaryRuleOrder = 3;

/// Panel averages (1/|T|) int_T f, by the Duffy surface rule.
inline CVector panel_averages(const SurfaceMesh& mesh, const ScalarField& f, int order = kBoundaryRuleOrder)
{
    const TriangleRule rule = triangle_rule(order);
    CVector out(mesh.num_triangles());
    for (std::size_t t = 0; t < out.size(); ++t) {
        const AffineChart c = chart(mesh, t);
        Complex acc{0.0, 0.0};
        for (std::size_t q = 0; q < rule.weights.size(); ++q)
            acc += rule.weights[q] * f(c(rule.s[q], rule.t[q]));
        out[t] = 2.0 * acc;
    }
    return out;
}

/// Panel averages of a normal derivative taken along the flat panel normal.
inline CVector panel_normal_averages(const SurfaceMesh& mesh, const NormalField& dfdn, int order = kBoundaryRuleOrder)
{
    const TriangleRule rule = triangle_rule(order);
    CVector out(mesh.num_triangles());
    for (std::size_t t = 0; t < out.size(); ++t) {
        const AffineChart c = chart(mesh, t);
        Complex acc{0.0, 0.0};
        for (std::size_t q = 0; q < rule.weights.size(); ++q)
            acc += rule.weights[q] * dfdn(c(rule.s[q], rule.t[q]), mesh.normal(t));
        out[t] = 2.0 * acc;
    }
    return out;
}

/// ||u - v||_{L2} / ||v||_{L2} for piecewise constants.
inline double relative_l2_error(const SurfaceMesh& mesh, std::span<const Complex> u, std::span<const Complex> v)
{
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        num += mesh.area(t) * std::norm(u[t] - v[t]);
        den += mesh.area(t) * std::norm(v[t]);
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// L2 error of a piecewise constant u against the pointwise function dfdn,
/// relative to ||dfdn||, integrated with the surface rule.
inline double relative_l2_error_pointwise(const SurfaceMesh& mesh, std::span<const Complex> u, const NormalField& dfdn,
                                          int order = 6)
{
    const TriangleRule rule = triangle_rule(order);
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const AffineChart c = chart(mesh, t);
        for (std::size_t q = 0; q < rule.weights.size(); ++q) {
            const Complex exact = dfdn(c(rule.s[q], rule.t[q]), mesh.normal(t));
            num += c.gramian * rule.weights[q] * std::norm(u[t] - exact);
            den += c.gramian * rule.weights[q] * std::norm(exact);
        }
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

// ---------------------------------------------------------------------------
// Potential evaluation
// ---------------------------------------------------------------------------

/// Chart of a single point viewed as a degenerate panel: all rule points map to
/// p, and the gramian 2 cancels the reference triangle area 1/2.
inline AffineChart point_chart(const Vec3& p) { return {p, Vec3{}, Vec3{}, 2.0}; }

/// u(z) = sum_j density_j int_{T_j} k(z, y) dy for each point z.
inline CVector potential_eval(const SurfaceMesh& mesh, const KernelSpec& spec, std::span<const Complex> density,
                              std::span<const Vec3> points, int order = QuadratureOrders{}.disjoint,
                              Backend* backend = nullptr)
{
    if (density.size() != mesh.num_triangles())
        throw std::invalid_argument("potential_eval: density length does not match the mesh");
    BatchBackend fallback;
    Backend& be = backend ? *backend : fallback;
    CVector out(points.size(), Complex{0.0, 0.0});
    MergedBatch batch{PairCase::disjoint, order, spec, {}, {}, {}};
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        batch.charts_y.push_back(chart(mesh, t));
        batch.normals_y.push_back(mesh.normal(t));
    }
    for (std::size_t p = 0; p < points.size(); ++p) {
        for (std::size_t t = 0; t < mesh.num_triangles(); ++t)
            if (point_on_panel(mesh, t, points[p]))
                throw DomainError("potential_eval: evaluation point lies on panel " + std::to_string(t));
        batch.charts_x.assign(mesh.num_triangles(), point_chart(points[p]));
        const CVector values = batch_quadrature(be, batch);
        Complex acc{0.0, 0.0};
        for (std::size_t t = 0; t < values.size(); ++t)
            acc += density[t] * values[t];
        out[p] = acc;
    }
    return out;
}

/// 26 directions of a cube's faces, edges and corners, normalized and scaled.
inline std::vector<Vec3> check_points(double radius = 2.0)
{
    std::vector<Vec3> pts;
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j)
            for (int k = -1; k <= 1; ++k)
                if (i != 0 || j != 0 || k != 0)
                    pts.push_back(radius * normalized(Vec3{double(i), double(j), double(k)}));
    return pts;
}

// ---------------------------------------------------------------------------
// Model problems
// ---------------------------------------------------------------------------

struct SolverConfig {
    AssemblyConfig assembly;
    double tol = 1e-8;
    std::size_t maxit = 2000;
};

struct ProblemTimings {
    double basis_seconds = 0.0;
    double assembly_seconds = 0.0;
    double solve_seconds = 0.0;
};

struct LaplaceResult {
    CVector beta;      ///< Dirichlet panel averages
    CVector alpha;     ///< computed Neumann coefficients
    CVector reference; ///< panel averages of the exact Neumann data
    double l2_error = 0.0;           ///< against the panel averages
    double l2_error_pointwise = 0.0; ///< against the exact normal derivative
    SolveResult solve;
    ProblemTimings timings;
    AssemblyStats stats_v, stats_k;
};

/// Laplace V and K on a common partition; reusable for several data sets.
struct LaplaceOperators {
    AssembledOperator v;
    AssembledOperator k;
};

inline LaplaceOperators assemble_laplace(const SurfaceMesh& mesh, const AssemblyConfig& config)
{
    config.validate();
    const Partition part = build_partition(mesh, config);
    return {assemble_operator(mesh, KernelSpec::laplace_slp(), part, config),
            assemble_operator(mesh, KernelSpec::laplace_dlp(), part, config)};
}

/// Interior Dirichlet problem: solves V alpha = (M/2 + K) beta for the Neumann
/// coefficients alpha, given the harmonic f and its normal derivative.
inline LaplaceResult laplace_dirichlet_neumann(const SurfaceMesh& mesh, const LaplaceOperators& ops,
                                               const ScalarField& f, const NormalField& dfdn,
                                               const SolverConfig& config = {})
{
    LaplaceResult res;
    res.timings.basis_seconds = ops.v.basis_seconds + ops.k.basis_seconds;
    res.timings.assembly_seconds = ops.v.assembly_seconds + ops.k.assembly_seconds;
    res.stats_v = ops.v.stats;
    res.stats_k = ops.k.stats;
    res.beta = panel_averages(mesh, f);
    res.reference = panel_normal_averages(mesh, dfdn);

    CVector rhs = ops.k.matrix.matvec(res.beta);
    for (std::size_t t = 0; t < rhs.size(); ++t)
        rhs[t] += 0.5 * mesh.area(t) * res.beta[t];

    const auto t0 = std::chrono::steady_clock::now();
    res.solve = cg_solve(as_operator(ops.v.matrix, true, true), rhs, config.tol, config.maxit);
    res.timings.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.alpha = res.solve.x;
    res.l2_error = relative_l2_error(mesh, res.alpha, res.reference);
    res.l2_error_pointwise = relative_l2_error_pointwise(mesh, res.alpha, dfdn);
    return res;
}

inline LaplaceResult laplace_dirichlet_neumann(const SurfaceMesh& mesh, const ScalarField& f, const NormalField& dfdn,
                                               const SolverConfig& config = {})
{
    return laplace_dirichlet_neumann(mesh, assemble_laplace(mesh, config.assembly), f, dfdn, config);
}

struct HelmholtzResult {
    CVector density;
    std::vector<Vec3> points;
    CVector computed;
    CVector exact;
    double exterior_error = 0.0; ///< relative l2 over the check points
    SolveResult solve;
    ProblemTimings timings;
};

/// Exterior Dirichlet problem with u = (D - i eta S) w. Kernels carry the
/// 1/(4 pi) normalization here, so the traced equation reads
/// (I/2 + K - i eta V) w = f.
inline HelmholtzResult helmholtz_bw_solve(const SurfaceMesh& mesh, double kappa, double eta, const ScalarField& f,
                                          const SolverConfig& config = {},
                                          std::vector<Vec3> points = check_points())
{
    if (!(kappa >= 0.0))
        throw ConfigError("helmholtz_bw_solve: kappa must be non-negative");
    if (!(eta > 0.0))
        throw ConfigError("helmholtz_bw_solve: eta must be positive");
    config.assembly.validate();
    const Partition part = build_partition(mesh, config.assembly);
    const KernelSpec slp = KernelSpec::helmholtz_slp(kappa);
    const KernelSpec dlp = KernelSpec::helmholtz_dlp(kappa);
    const AssembledOperator v = assemble_operator(mesh, slp, part, config.assembly);
    const AssembledOperator k = assemble_operator(mesh, dlp, part, config.assembly);

    HelmholtzResult res;
    res.timings.basis_seconds = v.basis_seconds + k.basis_seconds;
    res.timings.assembly_seconds = v.assembly_seconds + k.assembly_seconds;

    const Complex ieta{0.0, eta};
    LinearOperator a{mesh.num_triangles(),
                     [&](std::span<const Complex> w) {
                         const CVector kw = k.matrix.matvec(w);
                         const CVector vw = v.matrix.matvec(w);
                         CVector y(w.size());
                         for (std::size_t t = 0; t < w.size(); ++t)
                             y[t] = 0.5 * mesh.area(t) * w[t] + kInvFourPi * (kw[t] - ieta * vw[t]);
                         return y;
                     },
                     false, false};
    const CVector f_avg = panel_averages(mesh, f);
    CVector rhs(f_avg.size());
    for (std::size_t t = 0; t < rhs.size(); ++t)
        rhs[t] = mesh.area(t) * f_avg[t];

    const auto t0 = std::chrono::steady_clock::now();
    res.solve = gmres_solve(a, rhs, config.tol, config.maxit);
    res.timings.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.density = res.solve.x;

    res.points = std::move(points);
    const CVector dw = potential_eval(mesh, dlp, res.density, res.points, config.assembly.scheduler.orders.disjoint);
    const CVector sw = potential_eval(mesh, slp, res.density, res.points, config.assembly.scheduler.orders.disjoint);
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < res.points.size(); ++p) {
        res.computed.push_back(kInvFourPi * (dw[p] - ieta * sw[p]));
        res.exact.push_back(f(res.points[p]));
        num += std::norm(res.computed[p] - res.exact[p]);
        den += std::norm(res.exact[p]);
    }
    res.exterior_error = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    return res;
}

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

/// Laplace fundamental solution 1/(4 pi |x - z|) and its normal derivative in x.
inline Complex laplace_green(const Vec3& x, const Vec3& z) { return kInvFourPi / norm(x - z); }
inline Complex laplace_green_dn(const Vec3& x, const Vec3& n, const Vec3& z)
{
    const Vec3 d = x - z;
    const double r = norm(d);
    return -kInvFourPi * dot(d, n) / (r * r * r);
}

/// Helmholtz fundamental solution e^{i kappa r}/(4 pi r).
inline Complex helmholtz_green(const Vec3& x, const Vec3& z, double kappa)
{
    const double r = norm(x - z);
    return kInvFourPi * std::exp(Complex{0.0, kappa * r}) / r;
}

struct HarmonicFunction {
    std::string name;
    ScalarField f;
    NormalField dfdn;
};

inline HarmonicFunction harmonic_quadratic()
{
    return {"f1", [](const Vec3& x) { return Complex{x.x * x.x - x.z * x.z}; },
            [](const Vec3& x, const Vec3& n) { return Complex{2.0 * x.x * n.x - 2.0 * x.z * n.z}; }};
}

inline HarmonicFunction harmonic_point_source(std::string name, Vec3 z)
{
    return {std::move(name), [z](const Vec3& x) { return laplace_green(x, z); },
            [z](const Vec3& x, const Vec3& n) { return laplace_green_dn(x, n, z); }};
}

inline std::vector<HarmonicFunction> model_harmonic_functions()
{
    return {harmonic_quadratic(), harmonic_point_source("f2", {1.2, 1.2, 1.2}),
            harmonic_point_source("f3", {1.0, 0.25, 1.0})};
}

} // namespace bemgca
