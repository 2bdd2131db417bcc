#include "bemgca/solver.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace bemgca;

namespace {

SolverConfig quiet_config()
{
    SolverConfig c;
    c.assembly.scheduler.workers_per_backend = 0;
    return c;
}

double residual(const MatrixXc& a, const CVector& x, const CVector& b)
{
    const VectorXc r = a * Eigen::Map<const VectorXc>(x.data(), Eigen::Index(x.size())) -
                       Eigen::Map<const VectorXc>(b.data(), Eigen::Index(b.size()));
    return r.norm() / Eigen::Map<const VectorXc>(b.data(), Eigen::Index(b.size())).norm();
}

} // namespace

TEST(Cg, IdentityInOneIteration)
{
    const MatrixXc a = MatrixXc::Identity(7, 7);
    const CVector b = oracle::random_vector(7, 1);
    const SolveResult r = cg_solve(as_operator(a, true, true), b, 1e-12);
    EXPECT_EQ(r.iterations, 1u);
    for (std::size_t i = 0; i < b.size(); ++i)
        EXPECT_NEAR(std::abs(r.x[i] - b[i]), 0.0, 1e-15);
}

TEST(Cg, FiniteTerminationOnDiagonal)
{
    MatrixXc a = MatrixXc::Zero(10, 10);
    for (int i = 0; i < 10; ++i)
        a(i, i) = double(i + 1);
    const CVector b(10, Complex{1.0, 0.0});
    const SolveResult r = cg_solve(as_operator(a, true, true), b, 1e-12);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 10u);
    EXPECT_LE(residual(a, r.x, b), 1e-12);
}

TEST(Cg, IndefiniteOperatorBreaksDown)
{
    MatrixXc a = MatrixXc::Identity(3, 3);
    a(1, 1) = -1.0;
    const CVector b(3, Complex{1.0, 0.0});
    EXPECT_THROW(cg_solve(as_operator(a, true, true), b), NumericalError);
    EXPECT_THROW(cg_solve(as_operator(a), b), ConfigError);
}

TEST(Gmres, NonNormalTwoByTwo)
{
    MatrixXc a(2, 2);
    a << Complex{1, 1}, Complex{100, 0}, Complex{0, 0}, Complex{2, -1};
    const CVector b{Complex{1, 0}, Complex{0, 1}};
    const SolveResult r = gmres_solve(as_operator(a), b, 1e-12);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(residual(a, r.x, b), 1e-12);
}

TEST(Gmres, RandomSystemAgainstDenseSolve)
{
    const Eigen::Index n = 50;
    Eigen::VectorXd sigma(n);
    for (Eigen::Index i = 0; i < n; ++i)
        sigma(i) = 1.0 + double(i) / double(n);
    const MatrixXc a = oracle::graded_matrix(n, sigma, 17);
    const CVector b = oracle::random_vector(std::size_t(n), 9);
    const SolveResult r = gmres_solve(as_operator(a), b, 1e-12);
    const VectorXc ref = a.partialPivLu().solve(Eigen::Map<const VectorXc>(b.data(), n));
    const VectorXc x = Eigen::Map<const VectorXc>(r.x.data(), n);
    EXPECT_LE((x - ref).norm() / ref.norm(), 1e-8);
}

TEST(Solve, DispatchByFlags)
{
    const MatrixXc a = MatrixXc::Identity(4, 4);
    const CVector b(4, Complex{1.0, 0.0});
    EXPECT_EQ(solve(as_operator(a, true, true), b).method, "cg");
    EXPECT_EQ(solve(as_operator(a), b).method, "gmres");
}

TEST(LinearOperator, LengthMismatchThrows)
{
    const MatrixXc a = MatrixXc::Identity(4, 4);
    const CVector b(3);
    EXPECT_THROW(as_operator(a)(b), std::invalid_argument);
}

TEST(LaplaceV, SymmetricPositiveDefinite)
{
    const SurfaceMesh m = build_sphere_mesh(2);
    const AssembledOperator v = assemble_operator(m, KernelSpec::laplace_slp(), quiet_config().assembly);
    const MatrixXc d = v.matrix.to_dense();
    const Eigen::MatrixXd re = d.real();
    EXPECT_EQ(d.imag().cwiseAbs().maxCoeff(), 0.0);
    EXPECT_LE((re - re.transpose()).norm(), 1e-10 * re.norm());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (re + re.transpose()));
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);

    // <Ax, y> = <x, Ay> on random probes.
    const LinearOperator op = as_operator(v.matrix, true, true);
    const CVector x = oracle::random_vector(m.num_triangles(), 1), y = oracle::random_vector(m.num_triangles(), 2);
    Complex axy{0.0, 0.0}, xay{0.0, 0.0};
    const CVector ax = op(x), ay = op(y);
    for (std::size_t i = 0; i < x.size(); ++i) {
        axy += std::conj(y[i]) * ax[i];
        xay += std::conj(ay[i]) * x[i];
    }
    EXPECT_LE(std::abs(axy - xay), 1e-10 * std::abs(axy));
}

TEST(PanelAverages, ExactForLinearFunctions)
{
    const SurfaceMesh m = build_sphere_mesh(1);
    const CVector a = panel_averages(m, [](const Vec3& x) { return Complex{2.0 * x.x - x.z + 1.0}; });
    for (std::size_t t = 0; t < m.num_triangles(); ++t) {
        const Vec3 c = m.midpoint(t);
        EXPECT_NEAR(a[t].real(), 2.0 * c.x - c.z + 1.0, 1e-14);
    }
}

TEST(PotentialEval, ConstantDensityAtCenter)
{
    double previous = 1.0;
    for (unsigned level = 1; level <= 4; ++level) {
        const SurfaceMesh m = build_sphere_mesh(level);
        const CVector ones(m.num_triangles(), Complex{1.0, 0.0});
        const std::vector<Vec3> p{{0, 0, 0}};
        const double err = std::abs(potential_eval(m, KernelSpec::laplace_slp(), ones, p)[0] - 1.0);
        EXPECT_LT(err, previous);
        previous = err;
    }
    EXPECT_LT(previous, 0.01);
}

TEST(PotentialEval, FarFieldMonopole)
{
    const SurfaceMesh m = build_sphere_mesh(2);
    const CVector ones(m.num_triangles(), Complex{1.0, 0.0});
    const std::vector<Vec3> p{{100, 0, 0}};
    const Complex u = potential_eval(m, KernelSpec::laplace_slp(), ones, p)[0];
    EXPECT_NEAR(u.real(), m.total_area() / (4.0 * std::numbers::pi * 100.0), 1e-4 * u.real());
}

TEST(PotentialEval, LinearInDensity)
{
    const SurfaceMesh m = build_sphere_mesh(1);
    const CVector a = oracle::random_vector(m.num_triangles(), 3), b = oracle::random_vector(m.num_triangles(), 4);
    CVector c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        c[i] = 2.0 * a[i] - Complex{0.0, 1.0} * b[i];
    const auto pts = check_points();
    const auto spec = KernelSpec::helmholtz_dlp(3);
    const CVector ua = potential_eval(m, spec, a, pts), ub = potential_eval(m, spec, b, pts),
                  uc = potential_eval(m, spec, c, pts);
    for (std::size_t p = 0; p < pts.size(); ++p)
        EXPECT_NEAR(std::abs(uc[p] - (2.0 * ua[p] - Complex{0.0, 1.0} * ub[p])), 0.0, 1e-12 * std::abs(uc[p]));
}

TEST(PotentialEval, PointOnSurfaceIsDomainError)
{
    const SurfaceMesh m = build_sphere_mesh(1);
    const CVector ones(m.num_triangles(), Complex{1.0, 0.0});
    const std::vector<Vec3> p{m.midpoint(3)};
    EXPECT_THROW(potential_eval(m, KernelSpec::laplace_slp(), ones, p), DomainError);
}

TEST(CheckPoints, TwentySixOnRadiusTwo)
{
    const auto pts = check_points();
    ASSERT_EQ(pts.size(), 26u);
    for (const auto& p : pts)
        EXPECT_NEAR(norm(p), 2.0, 1e-15);
}

TEST(Laplace, ConstantDirichletDataGivesZeroNeumann)
{
    const SurfaceMesh m = build_sphere_mesh(2);
    const LaplaceResult r = laplace_dirichlet_neumann(
        m, [](const Vec3&) { return Complex{1.0}; }, [](const Vec3&, const Vec3&) { return Complex{0.0}; },
        quiet_config());
    double na = 0.0;
    for (auto a : r.alpha)
        na = std::max(na, std::abs(a));
    EXPECT_LE(na, 0.05);
    EXPECT_TRUE(r.solve.converged);
}

TEST(Laplace, QuadraticConverges)
{
    const auto hf = harmonic_quadratic();
    double previous = 1.0;
    for (unsigned level = 2; level <= 3; ++level) {
        const LaplaceResult r = laplace_dirichlet_neumann(build_sphere_mesh(level), hf.f, hf.dfdn, quiet_config());
        EXPECT_TRUE(r.solve.converged);
        EXPECT_LT(r.l2_error_pointwise, previous);
        previous = r.l2_error_pointwise;
    }
    EXPECT_LT(previous, 0.1);
}

TEST(Helmholtz, ZeroDensityGivesZeroField)
{
    const SurfaceMesh m = build_sphere_mesh(1);
    const CVector w(m.num_triangles(), Complex{0.0, 0.0});
    for (const auto& u : potential_eval(m, KernelSpec::helmholtz_dlp(3), w, check_points()))
        EXPECT_EQ(u, Complex(0.0, 0.0));
}

TEST(Helmholtz, ExteriorReproduction)
{
    const double kappa = 3.0;
    const auto f = [&](const Vec3& x) { return helmholtz_green(x, {0, 0, 0.2}, kappa); };
    const HelmholtzResult r2 = helmholtz_bw_solve(build_sphere_mesh(2), kappa, kappa, f, quiet_config());
    const HelmholtzResult r3 = helmholtz_bw_solve(build_sphere_mesh(3), kappa, kappa, f, quiet_config());
    EXPECT_TRUE(r3.solve.converged);
    EXPECT_LT(r3.exterior_error, r2.exterior_error);
    EXPECT_LT(r3.exterior_error, 5e-2);
}

TEST(Helmholtz, ZeroWavenumberLimit)
{
    const auto f = [](const Vec3& x) { return helmholtz_green(x, {0.1, 0, 0.2}, 0.0); };
    const HelmholtzResult r2 = helmholtz_bw_solve(build_sphere_mesh(2), 0.0, 1.0, f, quiet_config());
    const HelmholtzResult r3 = helmholtz_bw_solve(build_sphere_mesh(3), 0.0, 1.0, f, quiet_config());
    EXPECT_LT(r3.exterior_error, r2.exterior_error);
}

TEST(Helmholtz, RejectsBadParameters)
{
    const SurfaceMesh m = build_sphere_mesh(1);
    const auto f = [](const Vec3&) { return Complex{0.0}; };
    EXPECT_THROW(helmholtz_bw_solve(m, -1.0, 1.0, f), ConfigError);
    EXPECT_THROW(helmholtz_bw_solve(m, 3.0, 0.0, f), ConfigError);
}
