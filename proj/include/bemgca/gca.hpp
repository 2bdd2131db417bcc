#pragma once

// Green cross approximation: per-cluster algebraic interpolation operators
// V_t with pivot sets t~ such that V_t restricted to t~ is the identity.
//
// For a cluster t the Green matrix A_t collects, for quadrature points z_j on
// the boundary of the enlarged cluster box, the panel integrals of the
// monopole field g(x, z_j) and the dipole field dg/dn_z(x, z_j). Partially
// pivoted ACA on A_t selects row pivots t~ (panels) and column pivots c~
// (sources); V_t = A_t[:, c~] * A_t[t~, c~]^{-1}.

#include "bemgca/cluster.hpp"
#include "bemgca/errors.hpp"
#include "bemgca/kernels.hpp"
#include "bemgca/mesh.hpp"
#include "bemgca/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <thread>
#include <vector>

namespace bemgca {

using MatrixXc = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
using VectorXc = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;

enum class SourceRole : std::uint8_t { monopole, dipole };

struct GreenSourceSet {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<double> weights;
    std::vector<SourceRole> roles;

    std::size_t size() const { return points.size(); }
};

struct GcaParams {
    double delta = 1.0;    ///< box enlargement: edge (1 + delta) times the original
    int m = 4;             ///< Gauss points per face direction
    double epsilon = 1e-4; ///< ACA tolerance
    std::size_t max_rank = 0; ///< 0 = unlimited
    int order = 3;         ///< triangle rule order for the Green panel integrals
};

/// Quadrature points on the faces of `box` enlarged by (1 + delta) about its
/// center; each geometric point appears twice (monopole then dipole).
/// A degenerate extent is first widened to max(extent, 1e-8 * scene_diameter).
inline GreenSourceSet green_sources(const Box& box, double delta, int m, double scene_diameter = 1.0)
{
    if (!(delta > 0.0))
        throw ConfigError("green_sources: delta must be positive");
    if (m < 1)
        throw ConfigError("green_sources: m must be at least 1");

    const Vec3 center = box.center();
    Vec3 half = 0.5 * box.extent();
    const double largest = std::max({box.extent().x, box.extent().y, box.extent().z});
    const double floor_extent = std::max(largest, 1e-8 * scene_diameter);
    for (int k = 0; k < 3; ++k)
        if (!(half[k] > 0.0))
            half[k] = 0.5 * floor_extent;
    half = (1.0 + delta) * half;

    const Rule1D g = gauss_legendre(m);
    GreenSourceSet set;
    for (int axis = 0; axis < 3; ++axis) {
        const int a = (axis + 1) % 3;
        const int b = (axis + 2) % 3;
        const double face_area = 4.0 * half[a] * half[b];
        for (double side : {-1.0, 1.0}) {
            Vec3 normal;
            normal[axis] = side;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) {
                    Vec3 p = center;
                    p[axis] += side * half[axis];
                    p[a] += (2.0 * g.points[std::size_t(i)] - 1.0) * half[a];
                    p[b] += (2.0 * g.points[std::size_t(j)] - 1.0) * half[b];
                    const double w = g.weights[std::size_t(i)] * g.weights[std::size_t(j)] * face_area;
                    for (SourceRole role : {SourceRole::monopole, SourceRole::dipole}) {
                        set.points.push_back(p);
                        set.normals.push_back(normal);
                        set.weights.push_back(w);
                        set.roles.push_back(role);
                    }
                }
        }
    }
    return set;
}

/// Which trace of the source fields the Green matrix integrates: the value
/// (single-layer trial/test side) or the panel-normal derivative (double-layer
/// trial side).
enum class GreenTrace { value, normal_derivative };

/// Field of source (z, n_z, role) at x, optionally differentiated along n_x.
inline Complex green_field(const KernelSpec& spec, const Vec3& x, const Vec3& n_x, const Vec3& z, const Vec3& n_z,
                           SourceRole role, GreenTrace trace)
{
    const Vec3 d = x - z;
    const double r = norm(d);
    const RadialProfile p = radial_profile(spec, r);
    const double dz = dot(d, n_z);
    if (trace == GreenTrace::value)
        return role == SourceRole::monopole ? p.g : -p.h * dz;
    const double dx = dot(d, n_x);
    if (role == SourceRole::monopole)
        return p.h * dx;
    return -p.dh * (dx * dz / r) - p.h * dot(n_x, n_z);
}

/// True if p lies on the closed triangle `panel` (up to rounding).
inline bool point_on_panel(const SurfaceMesh& mesh, std::size_t panel, const Vec3& p)
{
    const auto& tri = mesh.triangle(panel);
    const Vec3& a = mesh.vertex(tri[0]);
    const Vec3 e1 = mesh.vertex(tri[1]) - a;
    const Vec3 e2 = mesh.vertex(tri[2]) - a;
    const Vec3 rel = p - a;
    const double scale = norm(e1) + norm(e2);
    if (std::abs(dot(rel, mesh.normal(panel))) > 1e-12 * scale)
        return false;
    // Barycentric coordinates in the triangle plane.
    const double d11 = dot(e1, e1), d12 = dot(e1, e2), d22 = dot(e2, e2);
    const double r1 = dot(rel, e1), r2 = dot(rel, e2);
    const double det = d11 * d22 - d12 * d12;
    const double b1 = (d22 * r1 - d12 * r2) / det;
    const double b2 = (d11 * r2 - d12 * r1) / det;
    constexpr double tol = 1e-12;
    return b1 >= -tol && b2 >= -tol && b1 + b2 <= 1.0 + tol;
}

/// A_t[i][j] = w_j * integral over panel i of the field of source j.
inline MatrixXc build_green_matrix(const SurfaceMesh& mesh, std::span<const std::size_t> panels,
                                   const GreenSourceSet& sources, const KernelSpec& spec, GreenTrace trace,
                                   const TriangleRule& rule)
{
    MatrixXc a(Eigen::Index(panels.size()), Eigen::Index(sources.size()));
    std::vector<Vec3> pts(rule.size());
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const std::size_t panel = panels[i];
        const AffineChart c = chart(mesh, panel);
        for (std::size_t q = 0; q < rule.size(); ++q)
            pts[q] = c(rule.s[q], rule.t[q]);
        const Vec3& n = mesh.normal(panel);
        for (std::size_t j = 0; j < sources.size(); ++j) {
            if (point_on_panel(mesh, panel, sources.points[j]))
                throw ConfigError("build_green_matrix: source point lies on panel " + std::to_string(panel));
            Complex acc{0.0, 0.0};
            for (std::size_t q = 0; q < rule.size(); ++q)
                acc += rule.weights[q] *
                       green_field(spec, pts[q], n, sources.points[j], sources.normals[j], sources.roles[j], trace);
            a(Eigen::Index(i), Eigen::Index(j)) = (sources.weights[j] * c.gramian) * acc;
        }
    }
    return a;
}

/// Row/column access view over a dense matrix for ACA.
struct DenseView {
    const MatrixXc& m;

    Eigen::Index rows() const { return m.rows(); }
    Eigen::Index cols() const { return m.cols(); }
    VectorXc row(Eigen::Index i) const { return m.row(i).transpose(); }
    VectorXc col(Eigen::Index j) const { return m.col(j); }
};

struct AcaResult {
    std::vector<std::size_t> row_pivots;
    std::vector<std::size_t> col_pivots;
    std::size_t rank = 0;
    double residual_estimate = 0.0; ///< ||u_k|| ||v_k|| of the last cross computed
    double norm_estimate = 0.0;     ///< Frobenius norm estimate of the approximant
    MatrixXc u;                     ///< A ~ u * v^T
    MatrixXc v;
};

namespace detail {

inline Eigen::Index argmax_abs(const VectorXc& x, const std::vector<char>& excluded)
{
    Eigen::Index best = -1;
    double best_val = -1.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!excluded.empty() && excluded[std::size_t(i)])
            continue;
        const double a = std::abs(x(i));
        if (a > best_val) {
            best_val = a;
            best = i;
        }
    }
    return best;
}

} // namespace detail

/// Partially pivoted adaptive cross approximation. Next column = argmax of the
/// residual row, next row = argmax of the residual column among unused rows;
/// ties resolve to the lowest index. Stops once ||u_k|| ||v_k|| <= epsilon *
/// ||S_k||_F or the rank reaches max_rank (0 = unlimited).
template <class View>
AcaResult aca(const View& a, double epsilon, std::size_t max_rank = 0)
{
    if (!(epsilon > 0.0))
        throw ConfigError("aca: epsilon must be positive");
    const Eigen::Index nr = a.rows();
    const Eigen::Index nc = a.cols();
    const std::size_t limit = std::size_t(std::min(nr, nc));
    const std::size_t rank_cap = max_rank == 0 ? limit : std::min(max_rank, limit);

    AcaResult res;
    std::vector<VectorXc> us, vs;
    std::vector<char> used_rows(std::size_t(nr), 0), used_cols(std::size_t(nc), 0);
    double norm2 = 0.0;
    Eigen::Index i = nr > 0 ? 0 : -1;

    auto first_unused_row = [&]() -> Eigen::Index {
        for (Eigen::Index r = 0; r < nr; ++r)
            if (!used_rows[std::size_t(r)])
                return r;
        return -1;
    };

    while (i >= 0 && res.rank < rank_cap) {
        used_rows[std::size_t(i)] = 1;
        VectorXc row = a.row(i);
        for (std::size_t l = 0; l < us.size(); ++l)
            row -= us[l](i) * vs[l];
        const Eigen::Index j = detail::argmax_abs(row, used_cols);
        if (j < 0 || std::abs(row(j)) == 0.0) {
            // Residual row vanishes: try the next unused row.
            i = first_unused_row();
            continue;
        }
        VectorXc v = row / row(j);
        VectorXc u = a.col(j);
        for (std::size_t l = 0; l < us.size(); ++l)
            u -= vs[l](j) * us[l];

        const double un = u.norm(), vn = v.norm();
        double cross_terms = 0.0;
        for (std::size_t l = 0; l < us.size(); ++l)
            cross_terms += (us[l].dot(u) * vs[l].dot(v)).real();
        const double next_norm2 = std::max(norm2 + 2.0 * cross_terms + un * un * vn * vn, 0.0);
        res.residual_estimate = un * vn;
        // A cross below tolerance means the residual is already small enough; it
        // is not added, so exactly low-rank input yields its exact rank.
        if (res.rank > 0 && un * vn <= epsilon * std::sqrt(next_norm2))
            break;

        norm2 = next_norm2;
        used_cols[std::size_t(j)] = 1;
        res.row_pivots.push_back(std::size_t(i));
        res.col_pivots.push_back(std::size_t(j));
        us.push_back(std::move(u));
        vs.push_back(std::move(v));
        ++res.rank;
        res.norm_estimate = std::sqrt(norm2);

        i = detail::argmax_abs(us.back(), used_rows);
        if (i >= 0 && std::abs(us.back()(i)) == 0.0)
            i = first_unused_row();
    }

    res.u.resize(nr, Eigen::Index(res.rank));
    res.v.resize(nc, Eigen::Index(res.rank));
    for (std::size_t l = 0; l < res.rank; ++l) {
        res.u.col(Eigen::Index(l)) = us[l];
        res.v.col(Eigen::Index(l)) = vs[l];
    }
    return res;
}

struct InterpolationOperator {
    int cluster = -1;
    std::vector<std::size_t> local_pivots; ///< positions within the cluster's index range
    std::vector<std::size_t> pivots;       ///< panel indices
    MatrixXc v;                            ///< |t| x |t~|

    std::size_t rank() const { return pivots.size(); }
};

inline constexpr double kMaxPivotCondition = 1e14;

/// Builds V_t = A_t[:, c~] A_t[t~, c~]^{-1} from the Green matrix of `cluster`.
/// An ill-conditioned pivot block triggers one retry with epsilon / 10.
inline InterpolationOperator build_interpolation_operator(const SurfaceMesh& mesh, const ClusterTree& tree,
                                                          int cluster, const KernelSpec& spec, GreenTrace trace,
                                                          const GcaParams& params, double scene_diameter)
{
    const auto& node = tree.node(cluster);
    const auto panels = tree.indices(cluster);
    const GreenSourceSet sources = green_sources(node.box, params.delta, params.m, scene_diameter);
    const MatrixXc a = build_green_matrix(mesh, panels, sources, spec, trace, triangle_rule(params.order));

    double eps = params.epsilon;
    for (int attempt = 0; attempt < 2; ++attempt, eps *= 0.1) {
        const AcaResult r = aca(DenseView{a}, eps, params.max_rank);
        InterpolationOperator op;
        op.cluster = cluster;
        op.local_pivots = r.row_pivots;
        for (auto p : r.row_pivots)
            op.pivots.push_back(panels[p]);
        const auto k = Eigen::Index(r.rank);
        if (k == 0) {
            op.v.resize(a.rows(), 0);
            return op;
        }
        MatrixXc pivot_block(k, k), columns(a.rows(), k);
        for (Eigen::Index c = 0; c < k; ++c) {
            columns.col(c) = a.col(Eigen::Index(r.col_pivots[std::size_t(c)]));
            for (Eigen::Index rr = 0; rr < k; ++rr)
                pivot_block(rr, c) = a(Eigen::Index(r.row_pivots[std::size_t(rr)]), Eigen::Index(r.col_pivots[std::size_t(c)]));
        }
        const Eigen::JacobiSVD<MatrixXc> svd(pivot_block);
        const auto& sv = svd.singularValues();
        const double cond = sv(k - 1) > 0.0 ? sv(0) / sv(k - 1) : std::numeric_limits<double>::infinity();
        if (!(cond <= kMaxPivotCondition))
            continue;
        // V * B = C  <=>  B^T V^T = C^T
        op.v = pivot_block.transpose().partialPivLu().solve(columns.transpose()).transpose();
        for (Eigen::Index rr = 0; rr < k; ++rr) {
            op.v.row(Eigen::Index(r.row_pivots[std::size_t(rr)])).setZero();
            op.v(Eigen::Index(r.row_pivots[std::size_t(rr)]), rr) = Complex{1.0, 0.0};
        }
        return op;
    }
    throw NumericalError("build_interpolation_operator: singular pivot block for cluster " + std::to_string(cluster));
}

/// Interpolation operators for a set of clusters, indexed by cluster id.
class ClusterBasis {
public:
    ClusterBasis() = default;
    explicit ClusterBasis(std::size_t num_clusters) : ops_(num_clusters) {}

    bool has(int cluster) const { return ops_[std::size_t(cluster)].cluster >= 0; }
    const InterpolationOperator& at(int cluster) const { return ops_[std::size_t(cluster)]; }
    InterpolationOperator& slot(int cluster) { return ops_[std::size_t(cluster)]; }
    std::size_t num_clusters() const { return ops_.size(); }

    std::size_t storage_bytes() const
    {
        std::size_t bytes = 0;
        for (const auto& op : ops_)
            bytes += std::size_t(op.v.size()) * sizeof(Complex) + op.pivots.size() * sizeof(std::size_t);
        return bytes;
    }

private:
    std::vector<InterpolationOperator> ops_;
};

/// Clusters that appear as row (or column) cluster of an admissible leaf.
inline std::vector<int> clusters_needing_basis(const BlockTree& blocks, bool rows)
{
    std::vector<int> out;
    for (int id : blocks.leaves()) {
        const auto& b = blocks.node(id);
        if (b.kind == BlockKind::admissible)
            out.push_back(rows ? b.row : b.col);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Builds operators for `clusters`; each cluster slot has exactly one producer.
inline ClusterBasis build_cluster_basis(const SurfaceMesh& mesh, const ClusterTree& tree,
                                        const std::vector<int>& clusters, const KernelSpec& spec, GreenTrace trace,
                                        const GcaParams& params, std::size_t threads = 1)
{
    ClusterBasis basis(tree.num_nodes());
    const double scene = tree.node(ClusterTree::root()).box.diameter();
    threads = std::max<std::size_t>(1, std::min(threads, clusters.size()));
    std::vector<std::exception_ptr> errors(threads);
    auto work = [&](std::size_t worker) {
        try {
            for (std::size_t k = worker; k < clusters.size(); k += threads)
                basis.slot(clusters[k]) =
                    build_interpolation_operator(mesh, tree, clusters[k], spec, trace, params, scene);
        } catch (...) {
            errors[worker] = std::current_exception();
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back(work, w);
    }
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return basis;
}

} // namespace bemgca
