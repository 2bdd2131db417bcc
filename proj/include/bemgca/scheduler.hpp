#pragma once

// Batched, case-homogeneous assembly scheduler.
//
// A master thread walks all near-field leaves and far-field coupling blocks and
// packs them into the disjoint work list, treating every pair in a block as
// disjoint. Lists that reach the byte budget are handed to worker threads,
// which merge the list into one flat batch, run it on a backend, and copy the
// results into the matrix payloads. Blocks that may contain touching panels
// are then scanned; every pair with shared vertices becomes a corrective item
// in the list of its singular case. Singular lists run after the disjoint
// values of their entries are stored, so their values overwrite them.
//
// Every output value is produced by exactly one quadrature sum in a fixed
// order, which makes the result independent of worker count, list size and
// backend mix.

#include "bemgca/cluster.hpp"
#include "bemgca/errors.hpp"
#include "bemgca/gca.hpp"
#include "bemgca/h2.hpp"
#include "bemgca/kernels.hpp"
#include "bemgca/mesh.hpp"
#include "bemgca/quadrature.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

namespace bemgca {

/// List footprint of one panel pair: two panel indices and a slot offset
/// (3 x 8 bytes) plus one 8-byte output value.
inline constexpr std::size_t kPairRecordBytes = 24;
inline constexpr std::size_t kOutputValueBytes = 8;
inline constexpr std::size_t kPairFootprint = kPairRecordBytes + kOutputValueBytes;
inline constexpr std::size_t kDefaultMaxsize = std::size_t(8) << 20;

/// Destination of a block's values: payload index and top-left offset in it.
struct OutputSlot {
    std::size_t payload = 0;
    std::size_t row0 = 0;
    std::size_t col0 = 0;
};

/// A (sub-)block of panel pairs rows x cols, or a single corrective pair.
struct WorkItem {
    std::size_t block = 0; ///< leaf/coupling descriptor id
    std::span<const std::size_t> rows;
    std::span<const std::size_t> cols;
    OutputSlot slot;
    bool possibly_singular = false;
    // Corrective items only: the pair evaluated, canonical_pair(rows[0], cols[0]).
    std::size_t eval_x = 0;
    std::size_t eval_y = 0;
    PairClassification pair{};

    std::size_t pairs() const { return rows.size() * cols.size(); }
    std::size_t bytes() const { return pairs() * kPairFootprint; }
};

enum class ListState { filling, ready, done };

struct WorkList {
    std::size_t id = 0;
    PairCase kind = PairCase::disjoint;
    std::vector<WorkItem> items;
    std::size_t bytes = 0;
    ListState state = ListState::filling;
    int attempts = 0;

    std::size_t pairs() const
    {
        std::size_t n = 0;
        for (const auto& it : items)
            n += it.pairs();
        return n;
    }
    bool empty() const { return items.empty(); }
};

/// Panel order in which entry (row, col) is evaluated. Symmetric kernels use
/// (max, min) so that mirrored and directly computed entries agree bitwise.
inline std::pair<std::size_t, std::size_t> canonical_pair(const KernelSpec& spec, std::size_t row, std::size_t col)
{
    if (spec.symmetric() && row < col)
        return {col, row};
    return {row, col};
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

enum class BackendKind { scalar, batch };

inline const char* to_string(BackendKind k) { return k == BackendKind::scalar ? "scalar" : "batch"; }

/// Flat, homogeneous batch of panel pairs (the merged parameters of a list).
struct MergedBatch {
    PairCase kind = PairCase::disjoint;
    int order = 3;
    KernelSpec spec;
    std::vector<AffineChart> charts_x;
    std::vector<AffineChart> charts_y;
    std::vector<Vec3> normals_y;

    std::size_t size() const { return charts_x.size(); }

    MergedBatch slice(std::size_t begin, std::size_t end) const
    {
        MergedBatch b{kind, order, spec, {}, {}, {}};
        b.charts_x.assign(charts_x.begin() + std::ptrdiff_t(begin), charts_x.begin() + std::ptrdiff_t(end));
        b.charts_y.assign(charts_y.begin() + std::ptrdiff_t(begin), charts_y.begin() + std::ptrdiff_t(end));
        b.normals_y.assign(normals_y.begin() + std::ptrdiff_t(begin), normals_y.begin() + std::ptrdiff_t(end));
        return b;
    }
};

/// Raised by a backend that cannot take a batch of this size; the caller splits.
class BatchTooLarge : public BackendError {
public:
    using BackendError::BackendError;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendKind kind() const = 0;
    virtual std::string name() const { return to_string(kind()); }
    /// Largest accepted batch in pairs; 0 means unlimited.
    virtual std::size_t max_batch() const { return 0; }
    /// Evaluates every pair of the batch; out.size() == batch.size().
    virtual void batch_quadrature(const MergedBatch& batch, std::span<Complex> out) = 0;
};

/// Reference backend: one integrate_pair call per pair in batch order.
class ScalarBackend : public Backend {
public:
    BackendKind kind() const override { return BackendKind::scalar; }
    void batch_quadrature(const MergedBatch& batch, std::span<Complex> out) override
    {
        const auto rule = RuleCache::instance().get(batch.kind, batch.order);
        for (std::size_t k = 0; k < batch.size(); ++k)
            out[k] = integrate_pair(batch.charts_x[k], batch.charts_y[k], batch.spec, batch.normals_y[k], *rule);
    }
};

/// Structure-of-arrays backend: quadrature-point-major sweeps over chunks of
/// pairs through eval_batch. Per pair the arithmetic and its order match
/// integrate_pair exactly.
class BatchBackend : public Backend {
public:
    explicit BatchBackend(std::size_t chunk = 256) : chunk_(std::max<std::size_t>(1, chunk)) {}

    BackendKind kind() const override { return BackendKind::batch; }

    void batch_quadrature(const MergedBatch& batch, std::span<Complex> out) override
    {
        const auto rule = RuleCache::instance().get(batch.kind, batch.order);
        std::vector<Vec3> xs(chunk_), ys(chunk_), ns(chunk_);
        std::vector<Complex> vals(chunk_), acc(chunk_);
        for (std::size_t base = 0; base < batch.size(); base += chunk_) {
            const std::size_t m = std::min(chunk_, batch.size() - base);
            std::fill_n(acc.begin(), m, Complex{0.0, 0.0});
            for (std::size_t k = 0; k < m; ++k)
                ns[k] = batch.normals_y[base + k];
            for (std::size_t q = 0; q < rule->size(); ++q) {
                const double xs_q = rule->xs[q], xt_q = rule->xt[q];
                const double ys_q = rule->ys[q], yt_q = rule->yt[q];
                for (std::size_t k = 0; k < m; ++k) {
                    xs[k] = batch.charts_x[base + k](xs_q, xt_q);
                    ys[k] = batch.charts_y[base + k](ys_q, yt_q);
                }
                eval_batch(batch.spec, std::span<const Vec3>(xs.data(), m), std::span<const Vec3>(ys.data(), m),
                           std::span<const Vec3>(ns.data(), m), std::span<Complex>(vals.data(), m));
                const double w = rule->weights[q];
                for (std::size_t k = 0; k < m; ++k)
                    acc[k] += w * vals[k];
            }
            for (std::size_t k = 0; k < m; ++k)
                out[base + k] = (batch.charts_x[base + k].gramian * batch.charts_y[base + k].gramian) * acc[k];
        }
    }

private:
    std::size_t chunk_;
};

/// Runs a batch on a backend, splitting in halves while the backend rejects its size.
inline std::vector<Complex> batch_quadrature(Backend& backend, const MergedBatch& batch)
{
    std::vector<Complex> out(batch.size());
    auto run = [&](auto&& self, std::size_t begin, std::size_t end) -> void {
        if (begin == end)
            return;
        const std::size_t cap = backend.max_batch();
        if (cap == 0 || end - begin <= cap) {
            try {
                if (begin == 0 && end == batch.size()) {
                    backend.batch_quadrature(batch, out);
                } else {
                    const MergedBatch part = batch.slice(begin, end);
                    backend.batch_quadrature(part, std::span<Complex>(out).subspan(begin, end - begin));
                }
                return;
            } catch (const BatchTooLarge&) {
                if (end - begin == 1)
                    throw;
            }
        }
        const std::size_t mid = begin + (end - begin) / 2;
        self(self, begin, mid);
        self(self, mid, end);
    };
    run(run, 0, batch.size());
    return out;
}

// ---------------------------------------------------------------------------
// Event log
// ---------------------------------------------------------------------------

struct ListEvent {
    std::size_t id = 0;
    PairCase kind = PairCase::disjoint;
    std::size_t items = 0;
    std::size_t pairs = 0;
    std::size_t bytes = 0;
    std::string backend;
    double t_ready = -1.0; ///< seconds since run start
    double t_dequeue = -1.0;
    double t_done = -1.0;
    int ready_transitions = 0;
    int done_transitions = 0;
};

/// One CSV line per list.
inline void write_event_csv(std::ostream& os, const std::vector<ListEvent>& events)
{
    os << "list,case,items,pairs,bytes,backend,t_ready,t_dequeue,t_done\n";
    for (const auto& e : events)
        os << e.id << ',' << to_string(e.kind) << ',' << e.items << ',' << e.pairs << ',' << e.bytes << ','
           << e.backend << ',' << e.t_ready << ',' << e.t_dequeue << ',' << e.t_done << '\n';
}

class EventLog {
public:
    void start() { t0_ = std::chrono::steady_clock::now(); }

    void ready(const WorkList& l)
    {
        std::lock_guard lock(mutex_);
        auto& e = events_[l.id];
        e.id = l.id;
        e.kind = l.kind;
        e.items = l.items.size();
        e.pairs = l.pairs();
        e.bytes = l.bytes;
        e.t_ready = now();
        ++e.ready_transitions;
    }
    void dequeued(std::size_t id, const std::string& backend)
    {
        std::lock_guard lock(mutex_);
        auto& e = events_[id];
        e.t_dequeue = now();
        e.backend = backend;
    }
    void done(std::size_t id)
    {
        std::lock_guard lock(mutex_);
        auto& e = events_[id];
        e.t_done = now();
        ++e.done_transitions;
    }

    std::vector<ListEvent> events() const
    {
        std::lock_guard lock(mutex_);
        std::vector<ListEvent> out;
        for (const auto& [id, e] : events_)
            out.push_back(e);
        return out;
    }

private:
    double now() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

    mutable std::mutex mutex_;
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
    std::map<std::size_t, ListEvent> events_;
};

// ---------------------------------------------------------------------------
// List manager
// ---------------------------------------------------------------------------

/// Owns the lists being filled: one disjoint list (fed by the master) and one
/// list per singular case (fed by result distribution on any thread).
class ListManager {
public:
    using Sink = std::function<void(WorkList&&)>;

    ListManager(std::size_t maxsize_bytes, Sink sink) : maxsize_(maxsize_bytes), sink_(std::move(sink))
    {
        if (maxsize_ < kPairFootprint)
            throw ConfigError("list size " + std::to_string(maxsize_) + " bytes cannot hold a single pair record (" +
                              std::to_string(kPairFootprint) + " bytes)");
        disjoint_ = fresh(PairCase::disjoint);
        for (auto c : kAllPairCases)
            singular_[std::size_t(c)] = fresh(c);
    }

    std::size_t maxsize() const { return maxsize_; }

    /// Appends a block to the disjoint list. If it does not fit, the current
    /// list is marked ready first; a block larger than the budget is split
    /// along its longer index dimension until the pieces fit.
    void add_block(const WorkItem& block)
    {
        if (block.pairs() == 0)
            return;
        if (block.bytes() > maxsize_) {
            WorkItem first = block, second = block;
            if (block.rows.size() >= block.cols.size()) {
                const std::size_t h = block.rows.size() / 2;
                first.rows = block.rows.first(h);
                second.rows = block.rows.subspan(h);
                second.slot.row0 += h;
            } else {
                const std::size_t h = block.cols.size() / 2;
                first.cols = block.cols.first(h);
                second.cols = block.cols.subspan(h);
                second.slot.col0 += h;
            }
            add_block(first);
            add_block(second);
            return;
        }
        if (disjoint_.bytes + block.bytes() > maxsize_) {
            auto full = std::exchange(disjoint_, fresh(PairCase::disjoint));
            emit(std::move(full));
        }
        disjoint_.bytes += block.bytes();
        disjoint_.items.push_back(block);
    }

    /// Appends a corrective single-pair item to the list of its case. Thread-safe.
    void add_corrective(PairCase kind, const WorkItem& item)
    {
        std::optional<WorkList> full;
        {
            std::lock_guard lock(mutex_);
            auto& list = singular_[std::size_t(kind)];
            if (list.bytes + item.bytes() > maxsize_)
                full = std::exchange(list, fresh(kind));
            list.bytes += item.bytes();
            list.items.push_back(item);
        }
        if (full)
            emit(std::move(*full));
    }

    void flush_disjoint()
    {
        if (!disjoint_.empty())
            emit(std::exchange(disjoint_, fresh(PairCase::disjoint)));
    }

    void flush_singular()
    {
        std::vector<WorkList> pending;
        {
            std::lock_guard lock(mutex_);
            for (auto c : kAllPairCases) {
                auto& list = singular_[std::size_t(c)];
                if (!list.empty())
                    pending.push_back(std::exchange(list, fresh(c)));
            }
        }
        for (auto& l : pending)
            emit(std::move(l));
    }

    const WorkList& current_disjoint() const { return disjoint_; }
    std::size_t lists_emitted() const { return emitted_.load(); }

private:
    WorkList fresh(PairCase kind) { return WorkList{next_id_.fetch_add(1), kind, {}, 0, ListState::filling, 0}; }

    void emit(WorkList&& list)
    {
        list.state = ListState::ready;
        emitted_.fetch_add(1);
        sink_(std::move(list));
    }

    std::size_t maxsize_;
    Sink sink_;
    WorkList disjoint_;
    std::array<WorkList, 4> singular_;
    std::mutex mutex_;
    std::atomic<std::size_t> next_id_{0};
    std::atomic<std::size_t> emitted_{0};
};

// ---------------------------------------------------------------------------
// Scheduler
// ---------------------------------------------------------------------------

struct SchedulerConfig {
    std::size_t maxsize_bytes = kDefaultMaxsize;
    std::size_t workers_per_backend = 2; ///< 0 = the master executes lists inline
    std::vector<BackendKind> backends{BackendKind::scalar, BackendKind::batch};
    BackendKind disjoint_affinity = BackendKind::batch;
    BackendKind singular_affinity = BackendKind::scalar;
    QuadratureOrders orders;
    std::size_t queue_factor = 4; ///< master blocks while queued lists >= factor * workers
    std::chrono::microseconds idle_backoff{200};
};

struct AssemblyStats {
    std::size_t lists = 0;
    std::size_t block_pairs = 0;      ///< pairs of all blocks handed to add_block
    std::size_t corrective_items = 0; ///< singular pairs found during distribution
    std::array<std::size_t, 4> executed_pairs{}; ///< per case
    std::size_t retries = 0;
    std::size_t rule_lookups = 0;

    std::size_t total_executed() const
    {
        std::size_t n = 0;
        for (auto p : executed_pairs)
            n += p;
        return n;
    }
};

inline std::vector<std::shared_ptr<Backend>> make_backends(const std::vector<BackendKind>& kinds)
{
    std::vector<std::shared_ptr<Backend>> out;
    for (auto k : kinds) {
        if (k == BackendKind::scalar)
            out.push_back(std::make_shared<ScalarBackend>());
        else
            out.push_back(std::make_shared<BatchBackend>());
    }
    return out;
}

class Scheduler {
public:
    Scheduler(const SurfaceMesh& mesh, KernelSpec spec, SchedulerConfig config,
              std::vector<std::shared_ptr<Backend>> backends = {})
        : mesh_(mesh), spec_(spec), config_(std::move(config)), backends_(std::move(backends))
    {
        if (backends_.empty())
            backends_ = make_backends(config_.backends);
        if (backends_.empty())
            throw ConfigError("scheduler: no backend configured");
        if (config_.maxsize_bytes < kPairFootprint)
            throw ConfigError("scheduler: maxsize " + std::to_string(config_.maxsize_bytes) +
                              " bytes is smaller than one pair record");
        queues_.resize(backends_.size());
    }

    const EventLog& events() const { return events_; }

    /// Assembles every block into `payloads` (indexed by OutputSlot::payload).
    AssemblyStats run(std::span<const WorkItem> blocks, std::span<MatrixXc* const> payloads)
    {
        payloads_ = payloads;
        stats_ = {};
        fatal_ = nullptr;
        stop_ = false;
        outstanding_ = 0;
        outstanding_disjoint_ = 0;
        queued_ = 0;
        events_.start();
        const std::size_t lookups_before = RuleCache::instance().lookups();
        master_ = std::this_thread::get_id();

        ListManager manager(config_.maxsize_bytes, [this](WorkList&& l) { enqueue(std::move(l)); });
        manager_ = &manager;

        std::vector<std::jthread> workers;
        const bool inline_mode = config_.workers_per_backend == 0;
        if (!inline_mode)
            for (std::size_t b = 0; b < backends_.size(); ++b)
                for (std::size_t w = 0; w < config_.workers_per_backend; ++w)
                    workers.emplace_back([this, b] { worker_loop(b); });

        try {
            for (const auto& block : blocks) {
                stats_.block_pairs += block.pairs();
                manager.add_block(block);
                drain_inline();
                check_fatal();
            }
            manager.flush_disjoint();
            drain_inline();
            wait_until([this] { return outstanding_disjoint_ == 0; });
            manager.flush_singular();
            drain_inline();
            wait_until([this] { return outstanding_ == 0; });
        } catch (...) {
            shutdown(workers);
            manager_ = nullptr;
            throw;
        }
        shutdown(workers);
        manager_ = nullptr;
        stats_.lists = manager.lists_emitted();
        stats_.rule_lookups = RuleCache::instance().lookups() - lookups_before;
        return stats_;
    }

    /// Merge_data: flat chart/normal arrays for every pair of the list, in item
    /// order and row-major within each item.
    MergedBatch merge(const WorkList& list) const
    {
        MergedBatch batch{list.kind, config_.orders.for_case(list.kind), spec_, {}, {}, {}};
        const std::size_t n = list.pairs();
        batch.charts_x.reserve(n);
        batch.charts_y.reserve(n);
        batch.normals_y.reserve(n);
        for (const auto& item : list.items) {
            if (list.kind == PairCase::disjoint) {
                for (auto r : item.rows)
                    for (auto c : item.cols) {
                        const auto [px, py] = canonical_pair(spec_, r, c);
                        AffineChart cx = chart(mesh_, px);
                        AffineChart cy = chart(mesh_, py);
                        if (r == c) {
                            // The tensor disjoint rule would hit coincident points. The entry
                            // is overwritten by its identical-case item, so a zero placeholder
                            // (lifted copy, zero gramians) is enough.
                            cy.origin = cy.origin + (1.0 + norm(cy.edge1)) * mesh_.normal(c);
                            cx.gramian = 0.0;
                            cy.gramian = 0.0;
                        }
                        batch.charts_x.push_back(cx);
                        batch.charts_y.push_back(cy);
                        batch.normals_y.push_back(mesh_.normal(py));
                    }
            } else {
                batch.charts_x.push_back(chart(mesh_, item.eval_x, item.pair.perm_x));
                batch.charts_y.push_back(chart(mesh_, item.eval_y, item.pair.perm_y));
                batch.normals_y.push_back(mesh_.normal(item.eval_y));
            }
        }
        return batch;
    }

    /// Merges, evaluates on `backend`, distributes; the list ends in state done.
    void execute_list(WorkList& list, Backend& backend)
    {
        if (list.state != ListState::ready)
            throw std::logic_error("execute_list: list " + std::to_string(list.id) + " is not ready");
        if (!list.empty()) {
            const MergedBatch batch = merge(list);
            const std::vector<Complex> values = batch_quadrature(backend, batch);
            if (list.kind == PairCase::disjoint)
                distribute_disjoint(list, values);
            else
                distribute_singular(list, values);
            {
                std::lock_guard lock(stats_mutex_);
                stats_.executed_pairs[std::size_t(list.kind)] += values.size();
            }
        }
        list.state = ListState::done;
    }

    /// Copies disjoint-rule values of every block into its slot, then queues a
    /// corrective item for each pair of a possibly-singular block that shares
    /// vertices.
    void distribute_disjoint(const WorkList& list, std::span<const Complex> values)
    {
        std::size_t k = 0;
        for (const auto& item : list.items) {
            MatrixXc& target = *payloads_[item.slot.payload];
            for (std::size_t i = 0; i < item.rows.size(); ++i)
                for (std::size_t j = 0; j < item.cols.size(); ++j)
                    target(Eigen::Index(item.slot.row0 + i), Eigen::Index(item.slot.col0 + j)) = values[k++];
        }
        std::size_t corrective = 0;
        for (const auto& item : list.items) {
            if (!item.possibly_singular)
                continue;
            for (std::size_t i = 0; i < item.rows.size(); ++i)
                for (std::size_t j = 0; j < item.cols.size(); ++j) {
                    const std::size_t r = item.rows[i], c = item.cols[j];
                    if (shared_vertex_count(r, c) == 0)
                        continue;
                    WorkItem fix;
                    fix.block = item.block;
                    fix.rows = item.rows.subspan(i, 1);
                    fix.cols = item.cols.subspan(j, 1);
                    fix.slot = {item.slot.payload, item.slot.row0 + i, item.slot.col0 + j};
                    std::tie(fix.eval_x, fix.eval_y) = canonical_pair(spec_, r, c);
                    fix.pair = classify_pair(mesh_, fix.eval_x, fix.eval_y);
                    manager_->add_corrective(fix.pair.kind, fix);
                    ++corrective;
                }
        }
        if (corrective > 0) {
            std::lock_guard lock(stats_mutex_);
            stats_.corrective_items += corrective;
        }
    }

private:
    int shared_vertex_count(std::size_t a, std::size_t b) const
    {
        if (a == b)
            return 3;
        int n = 0;
        for (auto u : mesh_.triangle(a))
            for (auto v : mesh_.triangle(b))
                n += (u == v);
        return n;
    }

    void distribute_singular(const WorkList& list, std::span<const Complex> values)
    {
        for (std::size_t k = 0; k < list.items.size(); ++k) {
            const auto& item = list.items[k];
            (*payloads_[item.slot.payload])(Eigen::Index(item.slot.row0), Eigen::Index(item.slot.col0)) = values[k];
        }
    }

    std::size_t backend_for(PairCase kind) const
    {
        const BackendKind want = kind == PairCase::disjoint ? config_.disjoint_affinity : config_.singular_affinity;
        for (std::size_t b = 0; b < backends_.size(); ++b)
            if (backends_[b]->kind() == want)
                return b;
        return 0;
    }

    void enqueue(WorkList&& list)
    {
        events_.ready(list);
        {
            std::lock_guard lock(state_mutex_);
            ++outstanding_;
            if (list.kind == PairCase::disjoint)
                ++outstanding_disjoint_;
        }
        push(backend_for(list.kind), std::move(list), std::this_thread::get_id() == master_);
    }

    void push(std::size_t backend, WorkList&& list, bool may_block)
    {
        if (config_.workers_per_backend == 0) {
            inline_queue_.emplace_back(backend, std::move(list));
            return;
        }
        std::unique_lock lock(state_mutex_);
        if (may_block) {
            const std::size_t limit = config_.queue_factor * config_.workers_per_backend * backends_.size();
            state_cv_.wait(lock, [&] { return queued_ < std::max<std::size_t>(1, limit) || fatal_; });
        }
        queues_[backend].push_back(std::move(list));
        ++queued_;
        lock.unlock();
        work_cv_.notify_all();
    }

    void drain_inline()
    {
        while (!inline_queue_.empty()) {
            auto [backend, list] = std::move(inline_queue_.front());
            inline_queue_.pop_front();
            process(backend, std::move(list));
            if (fatal_)
                std::rethrow_exception(fatal_);
        }
    }

    void process(std::size_t backend, WorkList&& list)
    {
        events_.dequeued(list.id, backends_[backend]->name());
        try {
            execute_list(list, *backends_[backend]);
            events_.done(list.id);
            finish(list.kind);
        } catch (...) {
            if (list.attempts == 0) {
                list.attempts = 1;
                {
                    std::lock_guard lock(stats_mutex_);
                    ++stats_.retries;
                }
                const std::size_t other = backends_.size() > 1 ? (backend + 1) % backends_.size() : backend;
                push(other, std::move(list), false);
                return;
            }
            {
                std::lock_guard lock(state_mutex_);
                if (!fatal_)
                    fatal_ = std::current_exception();
            }
            finish(list.kind);
        }
    }

    void finish(PairCase kind)
    {
        {
            std::lock_guard lock(state_mutex_);
            --outstanding_;
            if (kind == PairCase::disjoint)
                --outstanding_disjoint_;
        }
        state_cv_.notify_all();
    }

    void worker_loop(std::size_t backend)
    {
        for (;;) {
            std::optional<WorkList> list;
            {
                std::unique_lock lock(state_mutex_);
                work_cv_.wait_for(lock, config_.idle_backoff, [&] { return stop_ || !queues_[backend].empty(); });
                if (queues_[backend].empty()) {
                    if (stop_)
                        return;
                    continue;
                }
                list = std::move(queues_[backend].front());
                queues_[backend].pop_front();
                --queued_;
            }
            state_cv_.notify_all();
            process(backend, std::move(*list));
        }
    }

    template <class Pred>
    void wait_until(Pred pred)
    {
        if (config_.workers_per_backend == 0) {
            drain_inline();
            check_fatal();
            return;
        }
        std::unique_lock lock(state_mutex_);
        state_cv_.wait(lock, [&] { return pred() || fatal_; });
        lock.unlock();
        check_fatal();
    }

    void check_fatal()
    {
        std::lock_guard lock(state_mutex_);
        if (fatal_)
            std::rethrow_exception(fatal_);
    }

    void shutdown(std::vector<std::jthread>& workers)
    {
        {
            std::lock_guard lock(state_mutex_);
            stop_ = true;
        }
        work_cv_.notify_all();
        workers.clear();
        for (auto& q : queues_)
            q.clear();
        inline_queue_.clear();
    }

    const SurfaceMesh& mesh_;
    KernelSpec spec_;
    SchedulerConfig config_;
    std::vector<std::shared_ptr<Backend>> backends_;

    std::span<MatrixXc* const> payloads_;
    ListManager* manager_ = nullptr;
    EventLog events_;
    AssemblyStats stats_;
    std::mutex stats_mutex_;

    std::mutex state_mutex_;
    std::condition_variable state_cv_;
    std::condition_variable work_cv_;
    std::vector<std::deque<WorkList>> queues_;
    std::deque<std::pair<std::size_t, WorkList>> inline_queue_;
    std::size_t outstanding_ = 0;
    std::size_t outstanding_disjoint_ = 0;
    std::size_t queued_ = 0;
    bool stop_ = false;
    std::exception_ptr fatal_;
    std::thread::id master_;
};

// ---------------------------------------------------------------------------
// Operator assembly
// ---------------------------------------------------------------------------

/// Work items for all leaves of `m`: near-field leaves over cluster index
/// ranges, far-field leaves over pivot sets. For symmetric kernels on a shared
/// tree only leaves with row >= col are computed; the others become mirrors
/// that store nothing.
inline std::vector<WorkItem> collect_blocks(GCAMatrix& m, bool symmetric)
{
    const auto& tree = m.row_tree();
    const bool mirror = symmetric && m.row_tree_ptr() == m.col_tree_ptr() && m.row_basis_ptr() == m.col_basis_ptr();
    std::map<std::pair<int, int>, std::size_t> index;
    for (std::size_t k = 0; k < m.leaves().size(); ++k)
        index[{m.leaves()[k].row, m.leaves()[k].col}] = k;

    std::vector<WorkItem> items;
    for (std::size_t k = 0; k < m.leaves().size(); ++k) {
        auto& leaf = m.leaves()[k];
        if (mirror && leaf.row < leaf.col) {
            const auto it = index.find({leaf.col, leaf.row});
            if (it != index.end() && m.leaves()[it->second].kind == leaf.kind) {
                m.set_mirror(k, it->second);
                continue;
            }
        }
        WorkItem item;
        item.block = k;
        item.slot = {k, 0, 0};
        if (leaf.kind == BlockKind::admissible) {
            item.rows = m.row_basis().at(leaf.row).pivots;
            item.cols = m.col_basis().at(leaf.col).pivots;
        } else {
            item.rows = tree.indices(leaf.row);
            item.cols = m.col_tree().indices(leaf.col);
            item.possibly_singular = box_distance(tree.node(leaf.row).box, m.col_tree().node(leaf.col).box) == 0.0;
        }
        items.push_back(item);
    }
    return items;
}

/// Fills all payloads of a freshly constructed GCAMatrix through the scheduler.
/// Interpolation operators must already be part of `m`.
inline AssemblyStats run_assembly(GCAMatrix& m, const SurfaceMesh& mesh, const KernelSpec& spec,
                                  const SchedulerConfig& config, std::vector<ListEvent>* log = nullptr,
                                  std::vector<std::shared_ptr<Backend>> backends = {})
{
    const auto items = collect_blocks(m, spec.symmetric());
    std::vector<MatrixXc*> payloads;
    for (auto& leaf : m.leaves())
        payloads.push_back(&leaf.data);
    Scheduler scheduler(mesh, spec, config, std::move(backends));
    const AssemblyStats stats = scheduler.run(items, payloads);
    if (log)
        *log = scheduler.events().events();
    return stats;
}

} // namespace bemgca
