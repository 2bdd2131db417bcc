// bemgca: command line driver for operator setup, solves, verification and
// parameter sweeps on sphere meshes.
//
//   bemgca assemble --levels 2..4 --operator both --repetitions 5
//   bemgca solve --problem laplace-dirichlet --levels 2..5 --csv errors.csv
//   bemgca verify --level 2
//   bemgca sweep --param maxsize --values 1MB,2MB,4MB,8MB,16MB --level 4
//
// Every option can also be given as key=value in the file passed to --config;
// command line flags override the file.

#include "bemgca/bemgca.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace bemgca;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;

struct Options {
    std::string problem = "laplace-dirichlet";
    std::string levels = "3";
    std::string mesh_path;
    std::string op = "both";
    std::string function = "all";
    int order_disjoint = 3;
    int order_singular = 5;
    std::string maxsize = "8MB";
    std::size_t workers = 2;
    std::string backends = "scalar,batch";
    double delta = 1.0;
    int m = 4;
    double epsilon = 1e-4;
    double eta_adm = kDefaultEtaAdm;
    std::size_t leaf_size = kDefaultLeafSize;
    double kappa = 3.0;
    std::optional<double> eta;
    std::size_t repetitions = 1;
    double tol = 1e-8;
    std::size_t maxit = 2000;
    std::string csv_path;
    std::string events_path;
    std::uint64_t seed = 1;
    std::string sweep_param = "maxsize";
    std::string sweep_values;
    double verify_tol = 1e-4;
};

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep)) {
        part.erase(0, part.find_first_not_of(" \t"));
        part.erase(part.find_last_not_of(" \t") + 1);
        if (!part.empty())
            out.push_back(part);
    }
    return out;
}

long parse_int(const std::string& s, const std::string& what)
{
    long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ConfigError("invalid " + what + " '" + s + "': expected an integer");
    return v;
}

/// "3", "2..5" or "2,4,5".
std::vector<unsigned> parse_levels(const std::string& s)
{
    std::vector<unsigned> out;
    for (const auto& part : split(s, ',')) {
        const auto dots = part.find("..");
        long lo = 0, hi = 0;
        if (dots == std::string::npos) {
            lo = hi = parse_int(part, "level");
        } else {
            lo = parse_int(part.substr(0, dots), "level");
            hi = parse_int(part.substr(dots + 2), "level");
        }
        if (lo < 0 || hi < lo)
            throw ConfigError("invalid level range '" + part + "'");
        if (hi > long(kMaxSphereLevel))
            throw ConfigError("level " + std::to_string(hi) + " exceeds the maximum " + std::to_string(kMaxSphereLevel));
        for (long l = lo; l <= hi; ++l)
            out.push_back(unsigned(l));
    }
    if (out.empty())
        throw ConfigError("no levels given");
    return out;
}

/// Byte counts with optional KB/MB/GB suffix (powers of 1024).
std::size_t parse_bytes(const std::string& s)
{
    std::size_t i = 0;
    while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.'))
        ++i;
    if (i == 0)
        throw ConfigError("invalid byte size '" + s + "'");
    double v = 0.0;
    try {
        v = std::stod(s.substr(0, i));
    } catch (const std::exception&) {
        throw ConfigError("invalid byte size '" + s + "'");
    }
    std::string unit = s.substr(i);
    std::transform(unit.begin(), unit.end(), unit.begin(), [](unsigned char c) { return char(std::toupper(c)); });
    double scale = 1.0;
    if (unit == "" || unit == "B")
        scale = 1.0;
    else if (unit == "KB" || unit == "K")
        scale = 1024.0;
    else if (unit == "MB" || unit == "M")
        scale = 1024.0 * 1024.0;
    else if (unit == "GB" || unit == "G")
        scale = 1024.0 * 1024.0 * 1024.0;
    else
        throw ConfigError("unknown byte unit '" + unit + "' in '" + s + "'");
    return std::size_t(std::llround(v * scale));
}

std::vector<BackendKind> parse_backends(const std::string& s)
{
    std::vector<BackendKind> out;
    for (const auto& b : split(s, ',')) {
        if (b == "scalar")
            out.push_back(BackendKind::scalar);
        else if (b == "batch")
            out.push_back(BackendKind::batch);
        else
            throw ConfigError("unknown backend '" + b + "' (expected scalar or batch)");
    }
    if (out.empty())
        throw ConfigError("no backend given");
    return out;
}

AssemblyConfig assembly_config(const Options& o)
{
    AssemblyConfig c;
    c.leaf_size = o.leaf_size;
    c.eta_adm = o.eta_adm;
    c.gca.delta = o.delta;
    c.gca.m = o.m;
    c.gca.epsilon = o.epsilon;
    c.scheduler.maxsize_bytes = parse_bytes(o.maxsize);
    c.scheduler.workers_per_backend = o.workers;
    c.scheduler.backends = parse_backends(o.backends);
    c.scheduler.orders.disjoint = o.order_disjoint;
    c.scheduler.orders.singular = o.order_singular;
    c.validate();
    return c;
}

void validate(const Options& o)
{
    if (o.problem != "laplace-dirichlet" && o.problem != "helmholtz-bw")
        throw ConfigError("unknown problem '" + o.problem + "' (expected laplace-dirichlet or helmholtz-bw)");
    if (o.op != "slp" && o.op != "dlp" && o.op != "both")
        throw ConfigError("unknown operator '" + o.op + "' (expected slp, dlp or both)");
    if (!(o.kappa >= 0.0))
        throw ConfigError("kappa must be non-negative, got " + std::to_string(o.kappa));
    if (o.eta && !(*o.eta > 0.0))
        throw ConfigError("eta must be positive, got " + std::to_string(*o.eta));
    if (o.repetitions < 1)
        throw ConfigError("repetitions must be at least 1");
    if (!(o.tol > 0.0))
        throw ConfigError("tol must be positive");
    assembly_config(o);
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fmt(double v)
{
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

std::string hex(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

/// Rows printed as an aligned table and optionally written as CSV.
class Report {
public:
    explicit Report(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

    void print(std::ostream& os) const
    {
        std::vector<std::size_t> width(header_.size());
        for (std::size_t c = 0; c < header_.size(); ++c) {
            width[c] = header_[c].size();
            for (const auto& r : rows_)
                width[c] = std::max(width[c], r[c].size());
        }
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t c = 0; c < r.size(); ++c)
                os << (c ? "  " : "") << std::setw(int(width[c])) << r[c];
            os << '\n';
        };
        line(header_);
        for (const auto& r : rows_)
            line(r);
    }

    void write_csv(const std::string& path) const
    {
        std::ofstream f(path);
        if (!f)
            throw ConfigError("cannot write CSV file '" + path + "'");
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t c = 0; c < r.size(); ++c)
                f << (c ? "," : "") << csv_field(r[c]);
            f << "\r\n";
        };
        line(header_);
        for (const auto& r : rows_)
            line(r);
    }

    void emit(const Options& o) const
    {
        print(std::cout);
        if (!o.csv_path.empty())
            write_csv(o.csv_path);
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct MinAvgMax {
    double min = 0, avg = 0, max = 0;
};

MinAvgMax stats(const std::vector<double>& v)
{
    return {*std::min_element(v.begin(), v.end()), std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()),
            *std::max_element(v.begin(), v.end())};
}

struct MeshCase {
    std::string label;
    SurfaceMesh mesh;
};

std::vector<MeshCase> meshes(const Options& o)
{
    if (!o.mesh_path.empty())
        return {{o.mesh_path, load_mesh(o.mesh_path)}};
    std::vector<MeshCase> out;
    for (unsigned l : parse_levels(o.levels))
        out.push_back({std::to_string(l), build_sphere_mesh(l)});
    return out;
}

std::vector<std::pair<std::string, KernelSpec>> operators(const Options& o)
{
    const bool helm = o.problem == "helmholtz-bw";
    std::vector<std::pair<std::string, KernelSpec>> out;
    if (o.op != "dlp")
        out.emplace_back("V", helm ? KernelSpec::helmholtz_slp(o.kappa) : KernelSpec::laplace_slp());
    if (o.op != "slp")
        out.emplace_back("K", helm ? KernelSpec::helmholtz_dlp(o.kappa) : KernelSpec::laplace_dlp());
    return out;
}

class EventSink {
public:
    explicit EventSink(const Options& o)
    {
        if (!o.events_path.empty()) {
            file_.open(o.events_path);
            if (!file_)
                throw ConfigError("cannot write event log '" + o.events_path + "'");
            file_ << "run,list,case,items,pairs,bytes,backend,t_ready,t_dequeue,t_done\n";
        }
    }

    void add(const std::string& run, const std::vector<ListEvent>& events)
    {
        if (!file_.is_open())
            return;
        for (const auto& e : events)
            file_ << csv_field(run) << ',' << e.id << ',' << to_string(e.kind) << ',' << e.items << ',' << e.pairs
                  << ',' << e.bytes << ',' << e.backend << ',' << e.t_ready << ',' << e.t_dequeue << ',' << e.t_done
                  << '\n';
    }

private:
    std::ofstream file_;
};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

std::vector<std::string> assemble_row(const std::string& label, const std::string& name, const SurfaceMesh& mesh,
                                      const AssemblyConfig& cfg, const KernelSpec& spec, std::size_t repetitions,
                                      EventSink& sink, const std::string& extra = "")
{
    std::vector<double> basis, assembly;
    AssembledOperator last;
    for (std::size_t r = 0; r < repetitions; ++r) {
        last = assemble_operator(mesh, spec, cfg);
        basis.push_back(last.basis_seconds);
        assembly.push_back(last.assembly_seconds);
        sink.add(label + ":" + name + (extra.empty() ? "" : ":" + extra) + ":" + std::to_string(r), last.events);
    }
    const auto b = stats(basis), a = stats(assembly);
    const std::size_t n = mesh.num_triangles();
    const double dense = double(n) * double(n) * double(sizeof(Complex));
    std::vector<std::string> row{label,
                                 name,
                                 std::to_string(n),
                                 fmt(b.min),
                                 fmt(b.avg),
                                 fmt(b.max),
                                 fmt(a.min),
                                 fmt(a.avg),
                                 fmt(a.max),
                                 std::to_string(last.matrix.storage_bytes()),
                                 fmt(double(last.matrix.storage_bytes()) / dense),
                                 std::to_string(last.stats.lists),
                                 std::to_string(last.stats.corrective_items),
                                 hex(last.matrix.checksum())};
    if (!extra.empty())
        row.insert(row.begin(), extra);
    return row;
}

const std::vector<std::string> kAssembleHeader{"level",        "operator",     "dofs",        "basis_min_s",
                                               "basis_avg_s",  "basis_max_s",  "assembly_min_s", "assembly_avg_s",
                                               "assembly_max_s", "bytes",      "bytes_vs_dense", "lists",
                                               "corrective_items", "checksum"};

int cmd_assemble(const Options& o)
{
    const AssemblyConfig cfg = assembly_config(o);
    Report report(kAssembleHeader);
    EventSink sink(o);
    for (const auto& mc : meshes(o))
        for (const auto& [name, spec] : operators(o))
            report.add(assemble_row(mc.label, name, mc.mesh, cfg, spec, o.repetitions, sink));
    report.emit(o);
    return kExitOk;
}

int cmd_sweep(const Options& o)
{
    std::vector<std::string> values = split(o.sweep_values, ',');
    if (o.sweep_param == "maxsize") {
        if (values.empty())
            values = {"1MB", "2MB", "4MB", "8MB", "16MB"};
    } else if (o.sweep_param == "workers") {
        if (values.empty())
            values = {"0", "1", "2", "4"};
    } else if (o.sweep_param == "orders") {
        if (values.empty())
            values = {"3/5", "4/6"};
    } else if (o.sweep_param == "epsilon") {
        if (values.empty())
            values = {"1e-2", "1e-4", "1e-6"};
    } else {
        throw ConfigError("unknown sweep parameter '" + o.sweep_param + "' (expected maxsize, workers, orders or epsilon)");
    }

    std::vector<std::pair<std::string, AssemblyConfig>> configs;
    for (const auto& v : values) {
        Options w = o;
        if (o.sweep_param == "maxsize") {
            w.maxsize = v;
        } else if (o.sweep_param == "workers") {
            w.workers = std::size_t(parse_int(v, "worker count"));
        } else if (o.sweep_param == "orders") {
            const auto parts = split(v, '/');
            if (parts.size() != 2)
                throw ConfigError("orders value '" + v + "' must look like 3/5");
            w.order_disjoint = int(parse_int(parts[0], "order"));
            w.order_singular = int(parse_int(parts[1], "order"));
        } else {
            try {
                w.epsilon = std::stod(v);
            } catch (const std::exception&) {
                throw ConfigError("invalid epsilon '" + v + "'");
            }
        }
        configs.emplace_back(v, assembly_config(w));
    }

    auto header = kAssembleHeader;
    header.insert(header.begin(), o.sweep_param);
    Report report(header);
    EventSink sink(o);
    for (const auto& mc : meshes(o))
        for (const auto& [value, cfg] : configs)
            for (const auto& [name, spec] : operators(o))
                report.add(assemble_row(mc.label, name, mc.mesh, cfg, spec, o.repetitions, sink, value));
    report.emit(o);
    return kExitOk;
}

int cmd_solve(const Options& o)
{
    SolverConfig cfg;
    cfg.assembly = assembly_config(o);
    cfg.tol = o.tol;
    cfg.maxit = o.maxit;
    const auto cases = meshes(o);

    if (o.problem == "helmholtz-bw") {
        const double eta = o.eta.value_or(o.kappa > 0.0 ? o.kappa : 1.0);
        const Vec3 source{0.0, 0.0, 0.2};
        const double kappa = o.kappa;
        Report report({"problem", "level", "dofs", "setup_s", "solve_s", "iterations", "exterior_error", "ratio"});
        double previous = 0.0;
        for (const auto& mc : cases) {
            const HelmholtzResult r = helmholtz_bw_solve(
                mc.mesh, kappa, eta, [&](const Vec3& x) { return helmholtz_green(x, source, kappa); }, cfg);
            report.add({o.problem, mc.label, std::to_string(mc.mesh.num_triangles()),
                        fmt(r.timings.basis_seconds + r.timings.assembly_seconds), fmt(r.timings.solve_seconds),
                        std::to_string(r.solve.iterations), fmt(r.exterior_error),
                        previous > 0.0 ? fmt(r.exterior_error / previous) : ""});
            previous = r.exterior_error;
        }
        report.emit(o);
        return kExitOk;
    }

    std::vector<HarmonicFunction> functions;
    for (auto& hf : model_harmonic_functions())
        if (o.function == "all" || o.function == hf.name)
            functions.push_back(std::move(hf));
    if (functions.empty())
        throw ConfigError("unknown function '" + o.function + "' (expected f1, f2, f3 or all)");

    Report report({"problem", "function", "level", "dofs", "setup_s", "solve_s", "iterations", "l2_error",
                   "l2_error_vs_averages", "ratio"});
    std::map<std::string, double> previous;
    EventSink sink(o);
    for (const auto& mc : cases) {
        const LaplaceOperators ops = assemble_laplace(mc.mesh, cfg.assembly);
        sink.add(mc.label + ":V", ops.v.events);
        sink.add(mc.label + ":K", ops.k.events);
        for (const auto& hf : functions) {
            const LaplaceResult r = laplace_dirichlet_neumann(mc.mesh, ops, hf.f, hf.dfdn, cfg);
            const double prev = previous[hf.name];
            report.add({o.problem, hf.name, mc.label, std::to_string(mc.mesh.num_triangles()),
                        fmt(r.timings.basis_seconds + r.timings.assembly_seconds), fmt(r.timings.solve_seconds),
                        std::to_string(r.solve.iterations), fmt(r.l2_error_pointwise), fmt(r.l2_error),
                        prev > 0.0 ? fmt(r.l2_error_pointwise / prev) : ""});
            previous[hf.name] = r.l2_error_pointwise;
        }
    }
    report.emit(o);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct Check {
    std::string name;
    bool pass;
    std::string detail;
};

Complex direct_entry(const SurfaceMesh& mesh, const KernelSpec& spec, std::size_t i, std::size_t j,
                     const QuadratureOrders& orders)
{
    const auto [x, y] = canonical_pair(spec, i, j);
    const PairClassification c = classify_pair(mesh, x, y);
    const auto rule = RuleCache::instance().get(c.kind, orders.for_case(c.kind));
    return integrate_pair(chart(mesh, x, c.perm_x), chart(mesh, y, c.perm_y), spec, mesh.normal(y), *rule);
}

int cmd_verify(const Options& o)
{
    const auto levels = parse_levels(o.levels);
    const unsigned level = levels.front();
    if (level > 3)
        throw ConfigError("verify runs at level 3 or below, got " + std::to_string(level));
    const AssemblyConfig cfg = assembly_config(o);
    const SurfaceMesh mesh = o.mesh_path.empty() ? build_sphere_mesh(level) : load_mesh(o.mesh_path);
    const KernelSpec slp = o.problem == "helmholtz-bw" ? KernelSpec::helmholtz_slp(o.kappa) : KernelSpec::laplace_slp();
    const KernelSpec dlp = o.problem == "helmholtz-bw" ? KernelSpec::helmholtz_dlp(o.kappa) : KernelSpec::laplace_dlp();
    std::vector<Check> checks;

    {
        double worst = 0.0;
        for (auto kind : kAllPairCases)
            for (int n : {2, 3, 5}) {
                const QuadRule4D r = build_rule(kind, n);
                worst = std::max(worst, std::abs(std::accumulate(r.weights.begin(), r.weights.end(), 0.0) - 0.25));
            }
        checks.push_back({"quadrature_constant_kernel", worst <= 1e-13, "max |sum - 1/4| = " + fmt(worst)});
    }
    {
        const Vec3 p0{0, 0, 0}, p1{1, 0, 0}, p2{0, 1, 0};
        const SurfaceMesh tri({p0, p1, p2}, {{0, 1, 2}});
        const double a = 1.0, b = 1.0, c = std::sqrt(2.0), s = a + b + c;
        const double exact = (4.0 * 0.25 / 3.0) *
                             (std::log(s / (b + c - a)) / a + std::log(s / (c + a - b)) / b + std::log(s / (a + b - c)) / c) *
                             kInvFourPi;
        const Complex v = integrate_pair(chart(tri, 0), chart(tri, 0), KernelSpec::laplace_slp(), tri.normal(0),
                                         *RuleCache::instance().get(PairCase::identical, 8));
        const double err = std::abs(v.real() - exact) / exact;
        checks.push_back({"singular_self_integral_n8", err <= 1e-4, "relative error " + fmt(err)});
    }

    const Partition part = build_partition(mesh, cfg);
    checks.push_back({"partition", true,
                      std::to_string(part.blocks->count(BlockKind::admissible)) + " admissible, " +
                          std::to_string(part.blocks->count(BlockKind::inadmissible)) + " dense leaves"});
    std::uint64_t seed = o.seed;
    for (const auto& [name, spec] : {std::pair{std::string("V"), slp}, std::pair{std::string("K"), dlp}}) {
        const AssembledOperator op = assemble_operator(mesh, spec, part, cfg);
        const auto& m = op.matrix;

        double pivot_err = 0.0;
        for (const ClusterBasis* b : {m.row_basis_ptr().get(), m.col_basis_ptr().get()}) {
            if (!b)
                continue;
            for (std::size_t c = 0; c < b->num_clusters(); ++c) {
                if (!b->has(int(c)))
                    continue;
                const auto& ip = b->at(int(c));
                for (std::size_t k = 0; k < ip.rank(); ++k)
                    for (std::size_t j = 0; j < ip.rank(); ++j)
                        pivot_err = std::max(pivot_err, std::abs(ip.v(Eigen::Index(ip.local_pivots[k]), Eigen::Index(j)) -
                                                                 (k == j ? 1.0 : 0.0)));
            }
        }
        checks.push_back({name + ":pivot_rows_identity", pivot_err <= 1e-12, "max deviation " + fmt(pivot_err)});

        const std::size_t n = mesh.num_triangles();
        const QuadratureOrders orders = cfg.scheduler.orders;
        MatrixXc g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                g(Eigen::Index(i), Eigen::Index(j)) = direct_entry(mesh, spec, i, j, orders);
        const MatrixXc d = m.to_dense();
        const double rel = (g - d).norm() / g.norm();
        checks.push_back({name + ":dense_vs_compressed", rel <= o.verify_tol,
                          "relative Frobenius error " + fmt(rel) + " (limit " + fmt(o.verify_tol) + ")"});

        std::size_t bad = 0, singular = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (classify_pair(mesh, i, j).kind != PairCase::disjoint) {
                    ++singular;
                    bad += d(Eigen::Index(i), Eigen::Index(j)) != g(Eigen::Index(i), Eigen::Index(j));
                }
        checks.push_back({name + ":singular_entries_overwritten", bad == 0,
                          std::to_string(singular - bad) + "/" + std::to_string(singular) + " exact"});

        std::vector<std::string> mismatches;
        for (std::size_t workers : {std::size_t(0), std::size_t(8)})
            for (std::size_t maxsize : {std::size_t(64) << 10, kDefaultMaxsize})
                for (auto backends : {std::vector{BackendKind::scalar}, std::vector{BackendKind::batch}}) {
                    AssemblyConfig c = cfg;
                    c.scheduler.workers_per_backend = workers;
                    c.scheduler.maxsize_bytes = maxsize;
                    c.scheduler.backends = backends;
                    if (assemble_operator(mesh, spec, part, c).matrix.checksum() != m.checksum())
                        mismatches.push_back("workers=" + std::to_string(workers) + " maxsize=" +
                                             std::to_string(maxsize) + " " + to_string(backends.front()));
                }
        checks.push_back({name + ":scheduler_determinism", mismatches.empty(),
                          mismatches.empty() ? "checksum " + hex(m.checksum()) + " in 8 configurations"
                                             : "differs for " + mismatches.front()});

        std::mt19937_64 rng(seed++);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<Complex> x(n);
        for (auto& v : x)
            v = Complex{u(rng), u(rng)};
        const auto y = m.matvec(x);
        const VectorXc ref = d * Eigen::Map<const VectorXc>(x.data(), Eigen::Index(n));
        double mv = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            mv = std::max(mv, std::abs(y[i] - ref(Eigen::Index(i))));
        checks.push_back({name + ":matvec_consistency", mv <= 1e-12 * ref.norm(), "max deviation " + fmt(mv)});
    }

    bool all = true;
    Report report({"check", "status", "detail"});
    for (const auto& c : checks) {
        all = all && c.pass;
        report.add({c.name, c.pass ? "PASS" : "FAIL", c.detail});
    }
    report.emit(o);
    std::cout << (all ? "all checks passed" : "verification FAILED") << '\n';
    return all ? kExitOk : kExitVerifyFailed;
}

void add_options(CLI::App& app, Options& o)
{
    app.add_option("--problem", o.problem, "laplace-dirichlet or helmholtz-bw")->capture_default_str();
    app.add_option("--levels,--level", o.levels, "sphere levels: N, A..B or a comma list")->capture_default_str();
    app.add_option("--mesh", o.mesh_path, "mesh file instead of sphere levels");
    app.add_option("--operator", o.op, "slp, dlp or both")->capture_default_str();
    app.add_option("--function", o.function, "Laplace data: f1, f2, f3 or all")->capture_default_str();
    app.add_option("--order-disjoint", o.order_disjoint, "Gauss points per direction, disjoint pairs")
        ->capture_default_str();
    app.add_option("--order-singular", o.order_singular, "Gauss points per direction, singular pairs")
        ->capture_default_str();
    app.add_option("--maxsize", o.maxsize, "work list budget, e.g. 8MB")->capture_default_str();
    app.add_option("--workers", o.workers, "worker threads per backend (0 = inline)")->capture_default_str();
    app.add_option("--backends", o.backends, "comma list of scalar, batch")->capture_default_str();
    app.add_option("--delta", o.delta, "Green box enlargement")->capture_default_str();
    app.add_option("--m", o.m, "Green quadrature points per face direction")->capture_default_str();
    app.add_option("--epsilon", o.epsilon, "ACA tolerance")->capture_default_str();
    app.add_option("--eta-adm", o.eta_adm, "admissibility parameter (0 = dense)")->capture_default_str();
    app.add_option("--leaf-size", o.leaf_size, "cluster leaf size")->capture_default_str();
    app.add_option("--kappa", o.kappa, "Helmholtz wave number")->capture_default_str();
    app.add_option("--eta", o.eta, "coupling parameter (default kappa)");
    app.add_option("--repetitions", o.repetitions, "timed repetitions")->capture_default_str();
    app.add_option("--tol", o.tol, "relative residual tolerance")->capture_default_str();
    app.add_option("--maxit", o.maxit, "iteration limit")->capture_default_str();
    app.add_option("--csv", o.csv_path, "write the report as CSV");
    app.add_option("--log-events", o.events_path, "write one CSV line per work list");
    app.add_option("--seed", o.seed, "seed for random probes")->capture_default_str();
    app.add_option("--param", o.sweep_param, "sweep: maxsize, workers, orders or epsilon")->capture_default_str();
    app.add_option("--values", o.sweep_values, "sweep: comma list of values");
    app.add_option("--verify-tol", o.verify_tol, "verify: dense-vs-compressed limit")->capture_default_str();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Galerkin BEM operators with GCA compression and batched assembly"};
    Options o;
    add_options(app, o);
    app.set_config("--config", "", "key=value configuration file");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    auto* assemble = app.add_subcommand("assemble", "time interpolation setup and operator assembly")->fallthrough();
    auto* solve = app.add_subcommand("solve", "solve the model problem and report errors")->fallthrough();
    auto* verify = app.add_subcommand("verify", "run the invariant checks at small scale")->fallthrough();
    auto* sweep = app.add_subcommand("sweep", "assemble over a range of one parameter")->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        validate(o);
        if (assemble->parsed())
            return cmd_assemble(o);
        if (solve->parsed())
            return cmd_solve(o);
        if (verify->parsed())
            return cmd_verify(o);
        if (sweep->parsed())
            return cmd_sweep(o);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const MeshError& e) {
        std::cerr << "mesh error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ResourceError& e) {
        std::cerr << "resource error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitVerifyFailed;
    }
    return kExitConfig;
}
