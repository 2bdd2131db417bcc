#pragma once

// Fundamental solutions of the 3D Laplace and Helmholtz operators and their
// normal derivatives.
//
//   Laplace   g(r) = 1 / (4 pi r)
//   Helmholtz g(r) = exp(i kappa r) / r        (no 1/(4 pi) factor)
//
// Double-layer kernels differentiate in the trial point y along n_y.

#include "bemgca/errors.hpp"
#include "bemgca/vec3.hpp"

#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace bemgca {

using Complex = std::complex<double>;

enum class Equation { laplace, helmholtz };
enum class Layer { single, double_layer };

struct KernelSpec {
    Equation equation = Equation::laplace;
    Layer layer = Layer::single;
    double kappa = 0.0;

    /// g(x,y) = g(y,x) holds for single-layer kernels only.
    bool symmetric() const { return layer == Layer::single; }

    static KernelSpec laplace_slp() { return {Equation::laplace, Layer::single, 0.0}; }
    static KernelSpec laplace_dlp() { return {Equation::laplace, Layer::double_layer, 0.0}; }
    static KernelSpec helmholtz_slp(double kappa) { return {Equation::helmholtz, Layer::single, kappa}; }
    static KernelSpec helmholtz_dlp(double kappa) { return {Equation::helmholtz, Layer::double_layer, kappa}; }
};

inline constexpr double kInvFourPi = 0.25 * std::numbers::inv_pi;

namespace detail {

[[noreturn]] inline void coincident_points() { throw DomainError("kernel evaluated at coincident points"); }

} // namespace detail

/// Evaluates the kernel at (x, y); n_y is used by double-layer kernels only.
inline Complex eval(const KernelSpec& spec, const Vec3& x, const Vec3& y, const Vec3& n_y)
{
    const double dx = x.x - y.x;
    const double dy = x.y - y.y;
    const double dz = x.z - y.z;
    const double r2 = dx * dx + dy * dy + dz * dz;
    if (r2 == 0.0)
        detail::coincident_points();
    const double r = std::sqrt(r2);
    if (spec.equation == Equation::laplace) {
        if (spec.layer == Layer::single)
            return {kInvFourPi / r, 0.0};
        const double proj = dx * n_y.x + dy * n_y.y + dz * n_y.z;
        return {kInvFourPi * proj / (r2 * r), 0.0};
    }
    const double kr = spec.kappa * r;
    const Complex phase{std::cos(kr), std::sin(kr)};
    if (spec.layer == Layer::single)
        return phase / r;
    const double proj = dx * n_y.x + dy * n_y.y + dz * n_y.z;
    return phase * Complex{1.0, -kr} * (proj / (r2 * r));
}

/// Elementwise eval; bit-identical to calling eval in a loop.
inline void eval_batch(const KernelSpec& spec, std::span<const Vec3> xs, std::span<const Vec3> ys,
                       std::span<const Vec3> normals, std::span<Complex> out)
{
    if (xs.size() != ys.size() || xs.size() != normals.size() || xs.size() != out.size())
        throw std::invalid_argument("eval_batch: input lengths differ");
    for (std::size_t k = 0; k < xs.size(); ++k)
        out[k] = eval(spec, xs[k], ys[k], normals[k]);
}

inline std::vector<Complex> eval_batch(const KernelSpec& spec, std::span<const Vec3> xs, std::span<const Vec3> ys,
                                       std::span<const Vec3> normals)
{
    std::vector<Complex> out(xs.size());
    eval_batch(spec, xs, ys, normals, out);
    return out;
}

/// Radial profile g(r) and the derivatives needed for Green's representation
/// fields: h(r) = g'(r)/r and h'(r).
struct RadialProfile {
    Complex g;
    Complex h;
    Complex dh;
};

inline RadialProfile radial_profile(const KernelSpec& spec, double r)
{
    if (!(r > 0.0))
        detail::coincident_points();
    const double r2 = r * r;
    if (spec.equation == Equation::laplace) {
        const double c = kInvFourPi;
        return {Complex{c / r}, Complex{-c / (r2 * r)}, Complex{3.0 * c / (r2 * r2)}};
    }
    const double k = spec.kappa;
    const Complex phase{std::cos(k * r), std::sin(k * r)};
    const Complex ik{0.0, k};
    const Complex g = phase / r;
    // g' = e^{ikr} (ik/r - 1/r^2), g'' = e^{ikr} (-k^2/r - 2ik/r^2 + 2/r^3)
    const Complex dg = phase * (ik / r - 1.0 / r2);
    const Complex d2g = phase * (-k * k / r - 2.0 * ik / r2 + 2.0 / (r2 * r));
    return {g, dg / r, d2g / r - dg / r2};
}

} // namespace bemgca
