#pragma once

// Compressed operator: dense near-field leaves and factorized far-field leaves
// G|_{t x s} ~ V_t S_{t,s} W_s^T with S_{t,s} = G|_{t~ x s~}.

#include "bemgca/cluster.hpp"
#include "bemgca/errors.hpp"
#include "bemgca/gca.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bemgca {

struct LeafPayload {
    int block = -1; ///< block-tree node id
    int row = -1;   ///< row cluster id
    int col = -1;   ///< column cluster id
    BlockKind kind = BlockKind::inadmissible;
    MatrixXc data;     ///< |t| x |s| (inadmissible) or |t~| x |s~| coupling (admissible)
    int mirror_of = -1; ///< if >= 0, the leaf is the transpose of that leaf and stores nothing
};

inline constexpr std::size_t kDefaultDenseCap = 4096;

class GCAMatrix {
public:
    GCAMatrix() = default;

    GCAMatrix(std::shared_ptr<const ClusterTree> row_tree, std::shared_ptr<const ClusterTree> col_tree,
              std::shared_ptr<const BlockTree> blocks, std::shared_ptr<const ClusterBasis> row_basis,
              std::shared_ptr<const ClusterBasis> col_basis)
        : row_tree_(std::move(row_tree)), col_tree_(std::move(col_tree)), blocks_(std::move(blocks)),
          row_basis_(std::move(row_basis)), col_basis_(std::move(col_basis))
    {
        for (int id : blocks_->leaves()) {
            const auto& b = blocks_->node(id);
            LeafPayload leaf;
            leaf.block = id;
            leaf.row = b.row;
            leaf.col = b.col;
            leaf.kind = b.kind;
            if (b.kind == BlockKind::admissible) {
                if (!row_basis_ || !row_basis_->has(b.row) || !col_basis_ || !col_basis_->has(b.col))
                    throw ConfigError("GCAMatrix: admissible leaf without interpolation operators");
                leaf.data = MatrixXc::Zero(Eigen::Index(row_basis_->at(b.row).rank()),
                                           Eigen::Index(col_basis_->at(b.col).rank()));
            } else {
                leaf.data = MatrixXc::Zero(Eigen::Index(row_tree_->node(b.row).size()),
                                           Eigen::Index(col_tree_->node(b.col).size()));
            }
            leaves_.push_back(std::move(leaf));
        }
    }

    std::size_t rows() const { return row_tree_ ? row_tree_->num_dofs() : 0; }
    std::size_t cols() const { return col_tree_ ? col_tree_->num_dofs() : 0; }

    const ClusterTree& row_tree() const { return *row_tree_; }
    const ClusterTree& col_tree() const { return *col_tree_; }
    const BlockTree& blocks() const { return *blocks_; }
    const ClusterBasis& row_basis() const { return *row_basis_; }
    const ClusterBasis& col_basis() const { return *col_basis_; }
    std::shared_ptr<const ClusterTree> row_tree_ptr() const { return row_tree_; }
    std::shared_ptr<const ClusterTree> col_tree_ptr() const { return col_tree_; }
    std::shared_ptr<const BlockTree> blocks_ptr() const { return blocks_; }
    std::shared_ptr<const ClusterBasis> row_basis_ptr() const { return row_basis_; }
    std::shared_ptr<const ClusterBasis> col_basis_ptr() const { return col_basis_; }

    std::vector<LeafPayload>& leaves() { return leaves_; }
    const std::vector<LeafPayload>& leaves() const { return leaves_; }

    /// Marks leaf k as the transpose of leaf `source` and drops its own payload.
    void set_mirror(std::size_t k, std::size_t source)
    {
        leaves_[k].mirror_of = int(source);
        leaves_[k].data.resize(0, 0);
    }

    /// Stored payload of leaf k, resolving mirrors.
    MatrixXc payload(std::size_t k) const
    {
        const auto& leaf = leaves_[k];
        if (leaf.mirror_of >= 0)
            return leaves_[std::size_t(leaf.mirror_of)].data.transpose();
        return leaf.data;
    }

    /// y = M x; vectors in external (panel) order. Leaves are summed in block-tree preorder.
    std::vector<Complex> matvec(std::span<const Complex> x) const
    {
        if (x.size() != cols())
            throw std::invalid_argument("GCAMatrix::matvec: vector has length " + std::to_string(x.size()) +
                                        ", expected " + std::to_string(cols()));
        const auto& rperm = row_tree_->permutation();
        const auto& cperm = col_tree_->permutation();
        VectorXc xp(static_cast<Eigen::Index>(cols())), yp = VectorXc::Zero(Eigen::Index(rows()));
        for (std::size_t k = 0; k < cperm.size(); ++k)
            xp(Eigen::Index(k)) = x[cperm[k]];
        for (const auto& leaf : leaves_) {
            const auto& t = row_tree_->node(leaf.row);
            const auto& s = col_tree_->node(leaf.col);
            const auto xs = xp.segment(Eigen::Index(s.begin), Eigen::Index(s.size()));
            auto ys = yp.segment(Eigen::Index(t.begin), Eigen::Index(t.size()));
            const bool mirrored = leaf.mirror_of >= 0;
            const MatrixXc& data = mirrored ? leaves_[std::size_t(leaf.mirror_of)].data : leaf.data;
            if (leaf.kind == BlockKind::admissible) {
                const VectorXc coarse = col_basis_->at(leaf.col).v.transpose() * xs;
                const VectorXc coupled = mirrored ? VectorXc(data.transpose() * coarse) : VectorXc(data * coarse);
                ys.noalias() += row_basis_->at(leaf.row).v * coupled;
            } else if (mirrored) {
                ys.noalias() += data.transpose() * xs;
            } else {
                ys.noalias() += data * xs;
            }
        }
        std::vector<Complex> y(rows());
        for (std::size_t k = 0; k < rperm.size(); ++k)
            y[rperm[k]] = yp(Eigen::Index(k));
        return y;
    }

    /// Expands all leaves into a dense matrix in external order.
    MatrixXc to_dense(std::size_t cap = kDefaultDenseCap) const
    {
        if (rows() * cols() > cap * cap)
            throw ResourceError("GCAMatrix::to_dense: " + std::to_string(rows()) + "x" + std::to_string(cols()) +
                                " exceeds the dense cap of " + std::to_string(cap) + "^2 entries");
        MatrixXc dense = MatrixXc::Zero(Eigen::Index(rows()), Eigen::Index(cols()));
        for (std::size_t k = 0; k < leaves_.size(); ++k) {
            const auto& leaf = leaves_[k];
            const MatrixXc block = leaf_block(k);
            const auto rows_idx = row_tree_->indices(leaf.row);
            const auto cols_idx = col_tree_->indices(leaf.col);
            for (std::size_t i = 0; i < rows_idx.size(); ++i)
                for (std::size_t j = 0; j < cols_idx.size(); ++j)
                    dense(Eigen::Index(rows_idx[i]), Eigen::Index(cols_idx[j])) =
                        block(Eigen::Index(i), Eigen::Index(j));
        }
        return dense;
    }

    /// The leaf as an explicit |t| x |s| block in cluster order.
    MatrixXc leaf_block(std::size_t k) const
    {
        const auto& leaf = leaves_[k];
        if (leaf.kind != BlockKind::admissible)
            return payload(k);
        return row_basis_->at(leaf.row).v * payload(k) * col_basis_->at(leaf.col).v.transpose();
    }

    /// Bytes of payloads plus the interpolation operators.
    std::size_t storage_bytes() const
    {
        std::size_t bytes = 0;
        for (const auto& leaf : leaves_)
            bytes += std::size_t(leaf.data.size()) * sizeof(Complex);
        if (row_basis_)
            bytes += row_basis_->storage_bytes();
        if (col_basis_ && col_basis_ != row_basis_)
            bytes += col_basis_->storage_bytes();
        return bytes;
    }

    /// FNV-1a over the raw payload bytes in leaf order.
    std::uint64_t checksum() const
    {
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&](const void* p, std::size_t n) {
            const auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= b[i];
                h *= 1099511628211ull;
            }
        };
        for (const auto& leaf : leaves_)
            mix(leaf.data.data(), std::size_t(leaf.data.size()) * sizeof(Complex));
        return h;
    }

    void save(std::ostream& os) const;
    static GCAMatrix load(std::istream& is);

private:
    std::shared_ptr<const ClusterTree> row_tree_;
    std::shared_ptr<const ClusterTree> col_tree_;
    std::shared_ptr<const BlockTree> blocks_;
    std::shared_ptr<const ClusterBasis> row_basis_;
    std::shared_ptr<const ClusterBasis> col_basis_;
    std::vector<LeafPayload> leaves_;
};

// ---------------------------------------------------------------------------
// Binary dump. Layout (all integers little-endian 64-bit unless noted, doubles
// IEEE little-endian, complex = re, im):
//   magic "BEMGCA\0\0" | version | flags (bit0: shared trees, bit1: shared bases)
//   row tree [col tree] | block tree | row basis [col basis] | leaves
// ---------------------------------------------------------------------------

namespace detail::io {

static_assert(std::endian::native == std::endian::little, "binary dump assumes a little-endian host");

inline constexpr char kMagic[8] = {'B', 'E', 'M', 'G', 'C', 'A', '\0', '\0'};
inline constexpr std::uint64_t kVersion = 1;

template <class T>
void put(std::ostream& os, T value)
{
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& is)
{
    T value{};
    if (!is.read(reinterpret_cast<char*>(&value), sizeof(T)))
        throw Error("GCAMatrix::load: unexpected end of stream");
    return value;
}

inline void put_matrix(std::ostream& os, const MatrixXc& m)
{
    put<std::uint64_t>(os, std::uint64_t(m.rows()));
    put<std::uint64_t>(os, std::uint64_t(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()), std::streamsize(std::size_t(m.size()) * sizeof(Complex)));
}

inline MatrixXc get_matrix(std::istream& is)
{
    const auto r = get<std::uint64_t>(is);
    const auto c = get<std::uint64_t>(is);
    MatrixXc m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    if (!is.read(reinterpret_cast<char*>(m.data()), std::streamsize(std::size_t(m.size()) * sizeof(Complex))))
        throw Error("GCAMatrix::load: truncated matrix payload");
    return m;
}

inline void put_indices(std::ostream& os, const std::vector<std::size_t>& v)
{
    put<std::uint64_t>(os, v.size());
    for (auto x : v)
        put<std::uint64_t>(os, x);
}

inline std::vector<std::size_t> get_indices(std::istream& is)
{
    std::vector<std::size_t> v(get<std::uint64_t>(is));
    for (auto& x : v)
        x = get<std::uint64_t>(is);
    return v;
}

inline void put_tree(std::ostream& os, const ClusterTree& t)
{
    put<std::uint64_t>(os, t.leaf_size());
    put_indices(os, t.permutation());
    put<std::uint64_t>(os, t.num_nodes());
    for (const auto& n : t.nodes()) {
        put<std::uint64_t>(os, n.begin);
        put<std::uint64_t>(os, n.end);
        for (int k = 0; k < 3; ++k)
            put<double>(os, n.box.lo[k]);
        for (int k = 0; k < 3; ++k)
            put<double>(os, n.box.hi[k]);
        put<std::int64_t>(os, n.children[0]);
        put<std::int64_t>(os, n.children[1]);
        put<std::int64_t>(os, n.level);
    }
}

inline ClusterTree get_tree(std::istream& is)
{
    const auto leaf_size = get<std::uint64_t>(is);
    auto perm = get_indices(is);
    std::vector<ClusterNode> nodes(get<std::uint64_t>(is));
    for (auto& n : nodes) {
        n.begin = get<std::uint64_t>(is);
        n.end = get<std::uint64_t>(is);
        for (int k = 0; k < 3; ++k)
            n.box.lo[k] = get<double>(is);
        for (int k = 0; k < 3; ++k)
            n.box.hi[k] = get<double>(is);
        n.children[0] = int(get<std::int64_t>(is));
        n.children[1] = int(get<std::int64_t>(is));
        n.level = int(get<std::int64_t>(is));
    }
    return ClusterTree(std::move(nodes), std::move(perm), leaf_size);
}

inline void put_basis(std::ostream& os, const ClusterBasis& b)
{
    put<std::uint64_t>(os, b.num_clusters());
    for (std::size_t c = 0; c < b.num_clusters(); ++c) {
        const auto& op = b.at(int(c));
        put<std::int64_t>(os, op.cluster);
        if (op.cluster < 0)
            continue;
        put_indices(os, op.local_pivots);
        put_indices(os, op.pivots);
        put_matrix(os, op.v);
    }
}

inline ClusterBasis get_basis(std::istream& is)
{
    ClusterBasis b(get<std::uint64_t>(is));
    for (std::size_t c = 0; c < b.num_clusters(); ++c) {
        const auto id = get<std::int64_t>(is);
        if (id < 0)
            continue;
        auto& op = b.slot(int(c));
        op.cluster = int(id);
        op.local_pivots = get_indices(is);
        op.pivots = get_indices(is);
        op.v = get_matrix(is);
    }
    return b;
}

} // namespace detail::io

inline void GCAMatrix::save(std::ostream& os) const
{
    using namespace detail::io;
    os.write(kMagic, sizeof kMagic);
    put<std::uint64_t>(os, kVersion);
    const bool shared_trees = row_tree_ == col_tree_;
    const bool shared_bases = row_basis_ == col_basis_;
    put<std::uint64_t>(os, (shared_trees ? 1u : 0u) | (shared_bases ? 2u : 0u));
    put_tree(os, *row_tree_);
    if (!shared_trees)
        put_tree(os, *col_tree_);
    put<std::uint64_t>(os, blocks_->nodes().size());
    for (const auto& n : blocks_->nodes()) {
        put<std::int64_t>(os, n.row);
        put<std::int64_t>(os, n.col);
        put<std::uint8_t>(os, std::uint8_t(n.kind));
        put<std::uint64_t>(os, n.children.size());
        for (int c : n.children)
            put<std::int64_t>(os, c);
    }
    put_basis(os, row_basis_ ? *row_basis_ : ClusterBasis(row_tree_->num_nodes()));
    if (!shared_bases)
        put_basis(os, col_basis_ ? *col_basis_ : ClusterBasis(col_tree_->num_nodes()));
    put<std::uint64_t>(os, leaves_.size());
    for (const auto& leaf : leaves_) {
        put<std::int64_t>(os, leaf.block);
        put<std::int64_t>(os, leaf.mirror_of);
        put_matrix(os, leaf.data);
    }
    if (!os)
        throw Error("GCAMatrix::save: write failed");
}

inline GCAMatrix GCAMatrix::load(std::istream& is)
{
    using namespace detail::io;
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw Error("GCAMatrix::load: bad magic");
    if (const auto version = get<std::uint64_t>(is); version != kVersion)
        throw Error("GCAMatrix::load: unsupported version " + std::to_string(version));
    const auto flags = get<std::uint64_t>(is);
    auto row_tree = std::make_shared<const ClusterTree>(get_tree(is));
    auto col_tree = (flags & 1u) ? row_tree : std::make_shared<const ClusterTree>(get_tree(is));
    std::vector<BlockNode> nodes(get<std::uint64_t>(is));
    for (auto& n : nodes) {
        n.row = int(get<std::int64_t>(is));
        n.col = int(get<std::int64_t>(is));
        n.kind = BlockKind(get<std::uint8_t>(is));
        n.children.resize(get<std::uint64_t>(is));
        for (auto& c : n.children)
            c = int(get<std::int64_t>(is));
    }
    auto blocks = std::make_shared<const BlockTree>(std::move(nodes));
    auto row_basis = std::make_shared<const ClusterBasis>(get_basis(is));
    auto col_basis = (flags & 2u) ? row_basis : std::make_shared<const ClusterBasis>(get_basis(is));
    GCAMatrix m(row_tree, col_tree, blocks, row_basis, col_basis);
    const auto count = get<std::uint64_t>(is);
    if (count != m.leaves_.size())
        throw Error("GCAMatrix::load: leaf count mismatch");
    for (auto& leaf : m.leaves_) {
        if (get<std::int64_t>(is) != leaf.block)
            throw Error("GCAMatrix::load: leaf order mismatch");
        leaf.mirror_of = int(get<std::int64_t>(is));
        MatrixXc data = get_matrix(is);
        if (leaf.mirror_of >= 0) {
            if (std::size_t(leaf.mirror_of) >= m.leaves_.size() || data.size() != 0)
                throw Error("GCAMatrix::load: bad mirror record");
        } else if (data.rows() != leaf.data.rows() || data.cols() != leaf.data.cols()) {
            throw Error("GCAMatrix::load: payload shape mismatch");
        }
        leaf.data = std::move(data);
    }
    return m;
}

} // namespace bemgca
