#pragma once

// End-to-end operator setup: cluster tree, block tree, interpolation
// operators, then scheduled assembly of all leaves.

#include "bemgca/cluster.hpp"
#include "bemgca/errors.hpp"
#include "bemgca/gca.hpp"
#include "bemgca/h2.hpp"
#include "bemgca/kernels.hpp"
#include "bemgca/mesh.hpp"
#include "bemgca/quadrature.hpp"
#include "bemgca/scheduler.hpp"

#include <chrono>
#include <memory>

namespace bemgca {

struct AssemblyConfig {
    std::size_t leaf_size = kDefaultLeafSize;
    double eta_adm = kDefaultEtaAdm; ///< <= 0 disables compression
    GcaParams gca;
    SchedulerConfig scheduler;
    std::size_t basis_threads = 1;

    void validate() const
    {
        if (leaf_size < 1)
            throw ConfigError("leaf_size must be at least 1");
        if (!(gca.delta > 0.0))
            throw ConfigError("gca delta must be positive");
        if (gca.m < 1 || gca.m > kMaxGaussPoints)
            throw ConfigError("gca m must be in [1, " + std::to_string(kMaxGaussPoints) + "]");
        if (!(gca.epsilon > 0.0))
            throw ConfigError("gca epsilon must be positive");
        if (scheduler.orders.disjoint < 1 || scheduler.orders.disjoint > kMaxRuleOrder ||
            scheduler.orders.singular < 1 || scheduler.orders.singular > kMaxRuleOrder)
            throw ConfigError("quadrature orders must be in [1, " + std::to_string(kMaxRuleOrder) + "]");
        if (scheduler.maxsize_bytes < kPairFootprint)
            throw ConfigError("maxsize must be at least " + std::to_string(kPairFootprint) + " bytes");
        if (scheduler.backends.empty())
            throw ConfigError("at least one backend is required");
    }
};

/// Geometry shared by every operator on one mesh.
struct Partition {
    std::shared_ptr<const ClusterTree> tree;
    std::shared_ptr<const BlockTree> blocks;
};

inline Partition build_partition(const SurfaceMesh& mesh, const AssemblyConfig& config)
{
    auto tree = std::make_shared<const ClusterTree>(build_cluster_tree(mesh, config.leaf_size));
    auto blocks = std::make_shared<const BlockTree>(build_block_tree(*tree, *tree, config.eta_adm));
    return {tree, blocks};
}

struct AssembledOperator {
    GCAMatrix matrix;
    AssemblyStats stats;
    std::vector<ListEvent> events;
    double basis_seconds = 0.0;
    double assembly_seconds = 0.0;
};

/// Interpolation operators: rows always interpolate the kernel value, columns
/// the value (single layer) or the normal derivative (double layer). A single
/// layer operator shares one basis for rows and columns.
inline AssembledOperator assemble_operator(const SurfaceMesh& mesh, const KernelSpec& spec, const Partition& part,
                                           const AssemblyConfig& config,
                                           std::vector<std::shared_ptr<Backend>> backends = {})
{
    config.validate();
    using clock = std::chrono::steady_clock;
    AssembledOperator out;

    const auto t0 = clock::now();
    std::shared_ptr<const ClusterBasis> row_basis, col_basis;
    const auto row_clusters = clusters_needing_basis(*part.blocks, true);
    if (!row_clusters.empty()) {
        if (spec.layer == Layer::single) {
            auto clusters = row_clusters;
            for (int c : clusters_needing_basis(*part.blocks, false))
                clusters.push_back(c);
            std::sort(clusters.begin(), clusters.end());
            clusters.erase(std::unique(clusters.begin(), clusters.end()), clusters.end());
            row_basis = std::make_shared<const ClusterBasis>(build_cluster_basis(
                mesh, *part.tree, clusters, spec, GreenTrace::value, config.gca, config.basis_threads));
            col_basis = row_basis;
        } else {
            row_basis = std::make_shared<const ClusterBasis>(build_cluster_basis(
                mesh, *part.tree, row_clusters, spec, GreenTrace::value, config.gca, config.basis_threads));
            col_basis = std::make_shared<const ClusterBasis>(
                build_cluster_basis(mesh, *part.tree, clusters_needing_basis(*part.blocks, false), spec,
                                    GreenTrace::normal_derivative, config.gca, config.basis_threads));
        }
    }
    const auto t1 = clock::now();
    out.matrix = GCAMatrix(part.tree, part.tree, part.blocks, row_basis, col_basis);
    out.stats = run_assembly(out.matrix, mesh, spec, config.scheduler, &out.events, std::move(backends));
    const auto t2 = clock::now();
    out.basis_seconds = std::chrono::duration<double>(t1 - t0).count();
    out.assembly_seconds = std::chrono::duration<double>(t2 - t1).count();
    return out;
}

inline AssembledOperator assemble_operator(const SurfaceMesh& mesh, const KernelSpec& spec,
                                           const AssemblyConfig& config)
{
    config.validate();
    return assemble_operator(mesh, spec, build_partition(mesh, config), config);
}

} // namespace bemgca
