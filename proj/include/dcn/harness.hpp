#pragma once

// Experiment configuration, orchestration (suite -> reference -> topology ->
// schedule -> run), output files, trace comparison and invariant checks.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcn/adcn.hpp"
#include "dcn/consensus.hpp"
#include "dcn/cubic.hpp"
#include "dcn/dcn.hpp"
#include "dcn/glm_comm.hpp"
#include "dcn/metrics.hpp"
#include "dcn/network.hpp"
#include "dcn/objectives.hpp"

namespace dcn {

inline constexpr int kParamsSchemaVersion = 1;
inline constexpr const char* kParamsSchema = "dcn-params";

enum class Algorithm { dcn_convex, dcn_sc, adcn };

inline std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::dcn_convex: return "dcn-convex";
        case Algorithm::dcn_sc: return "dcn-sc";
        case Algorithm::adcn: return "adcn";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "dcn-convex") return Algorithm::dcn_convex;
    if (s == "dcn-sc") return Algorithm::dcn_sc;
    if (s == "adcn") return Algorithm::adcn;
    throw ConfigError("unknown algorithm '" + s + "' (expected dcn-convex, dcn-sc or adcn)");
}

/// dense | glm | glm-topk:K
struct BackendSpec {
    std::string kind = "dense";
    std::optional<int> topk;

    std::string str() const { return topk ? "glm-topk:" + std::to_string(*topk) : kind; }
};

inline BackendSpec parse_backend(const std::string& s) {
    if (s == "dense" || s == "glm") return BackendSpec{s, std::nullopt};
    const std::string pre = "glm-topk:";
    if (s.rfind(pre, 0) == 0) {
        const std::string k = s.substr(pre.size());
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(k, &used);
        } catch (const std::logic_error&) {
            used = 0;
        }
        if (used != k.size() || k.empty() || v < 1) throw ConfigError("backend: bad top-k count in '" + s + "'");
        return BackendSpec{"glm", v};
    }
    throw ConfigError("unknown backend '" + s + "' (expected dense, glm or glm-topk:K)");
}

struct TopologyConfig {
    /// static | tau-connected | per-step
    std::string kind = "static";
    /// ring | complete | path | random-geometric
    std::string graph = "ring";
    int tau = 1;
    double radius = 0.5;
    double edge_prob = 0.1;
    /// Chebyshev degree K (0: plain mixing; static graphs only).
    int chebyshev = 0;
};

struct RunConfig {
    SuiteSpec suite;
    TopologyConfig topology;
    Algorithm algorithm = Algorithm::dcn_sc;
    double eps = 1e-6;
    Mode mode = Mode::analytic;
    BackendSpec backend;
    std::uint64_t seed = 0;
    std::string out = "out";
    double solver_tol = 1e-10;
    /// Cubic coefficient for the basic method (default: mean L2).
    std::optional<double> L;
    /// Common start point: every coordinate set to this value.
    double x0 = 0.0;
    double ref_tol = 1e-10;
    int workers = 1;
    /// Cap on outer steps (negative: the scheduled count).
    int max_steps = -1;
    /// Stop as soon as the gap reaches eps.
    bool stop_at_eps = false;
};

namespace detail {

template <class T>
T get_as(const nlohmann::json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: key '" + key + "' has the wrong type");
    }
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("config: unknown key '" + where + it.key() + "'");
}

inline SuiteFamily parse_family(const std::string& s) {
    if (s == "quadratic") return SuiteFamily::quadratic;
    if (s == "logistic") return SuiteFamily::logistic;
    throw ConfigError("config: unknown suite family '" + s + "'");
}

inline std::string to_string(SuiteFamily f) { return f == SuiteFamily::quadratic ? "quadratic" : "logistic"; }

}  // namespace detail

/// Applies a JSON object on top of `cfg`. Unknown keys and wrong types
/// raise ConfigError.
inline RunConfig apply_config_json(RunConfig cfg, const nlohmann::json& j) {
    using detail::get_as;
    detail::reject_unknown(j,
                           {"suite", "topology", "algorithm", "eps", "mode", "backend", "seed", "out", "solver_tol",
                            "L", "x0", "ref_tol", "workers", "max_steps", "stop_at_eps"},
                           "");
    if (j.contains("suite")) {
        const auto& s = j.at("suite");
        detail::reject_unknown(s,
                               {"family", "m", "d", "heterogeneity", "mu", "L1", "samples_per_node", "mu_reg",
                                "label_noise", "feature_scale"},
                               "suite.");
        auto& o = cfg.suite;
        if (s.contains("family")) o.family = detail::parse_family(get_as<std::string>(s.at("family"), "suite.family"));
        if (s.contains("m")) o.m = get_as<int>(s.at("m"), "suite.m");
        if (s.contains("d")) o.d = get_as<int>(s.at("d"), "suite.d");
        if (s.contains("heterogeneity")) o.heterogeneity = get_as<double>(s.at("heterogeneity"), "suite.heterogeneity");
        if (s.contains("mu")) o.mu = get_as<double>(s.at("mu"), "suite.mu");
        if (s.contains("L1")) o.L1 = get_as<double>(s.at("L1"), "suite.L1");
        if (s.contains("samples_per_node"))
            o.samples_per_node = get_as<int>(s.at("samples_per_node"), "suite.samples_per_node");
        if (s.contains("mu_reg")) o.mu_reg = get_as<double>(s.at("mu_reg"), "suite.mu_reg");
        if (s.contains("label_noise")) o.label_noise = get_as<double>(s.at("label_noise"), "suite.label_noise");
        if (s.contains("feature_scale")) o.feature_scale = get_as<double>(s.at("feature_scale"), "suite.feature_scale");
    }
    if (j.contains("topology")) {
        const auto& t = j.at("topology");
        detail::reject_unknown(t, {"kind", "graph", "tau", "radius", "edge_prob", "chebyshev"}, "topology.");
        auto& o = cfg.topology;
        if (t.contains("kind")) o.kind = get_as<std::string>(t.at("kind"), "topology.kind");
        if (t.contains("graph")) o.graph = get_as<std::string>(t.at("graph"), "topology.graph");
        if (t.contains("tau")) o.tau = get_as<int>(t.at("tau"), "topology.tau");
        if (t.contains("radius")) o.radius = get_as<double>(t.at("radius"), "topology.radius");
        if (t.contains("edge_prob")) o.edge_prob = get_as<double>(t.at("edge_prob"), "topology.edge_prob");
        if (t.contains("chebyshev")) o.chebyshev = get_as<int>(t.at("chebyshev"), "topology.chebyshev");
    }
    if (j.contains("algorithm")) cfg.algorithm = parse_algorithm(get_as<std::string>(j.at("algorithm"), "algorithm"));
    if (j.contains("eps")) cfg.eps = get_as<double>(j.at("eps"), "eps");
    if (j.contains("mode")) cfg.mode = parse_mode(get_as<std::string>(j.at("mode"), "mode"));
    if (j.contains("backend")) cfg.backend = parse_backend(get_as<std::string>(j.at("backend"), "backend"));
    if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j.at("seed"), "seed");
    if (j.contains("out")) cfg.out = get_as<std::string>(j.at("out"), "out");
    if (j.contains("solver_tol")) cfg.solver_tol = get_as<double>(j.at("solver_tol"), "solver_tol");
    if (j.contains("L")) {
        if (j.at("L").is_null())
            cfg.L.reset();
        else
            cfg.L = get_as<double>(j.at("L"), "L");
    }
    if (j.contains("x0")) cfg.x0 = get_as<double>(j.at("x0"), "x0");
    if (j.contains("ref_tol")) cfg.ref_tol = get_as<double>(j.at("ref_tol"), "ref_tol");
    if (j.contains("workers")) cfg.workers = get_as<int>(j.at("workers"), "workers");
    if (j.contains("max_steps")) cfg.max_steps = get_as<int>(j.at("max_steps"), "max_steps");
    if (j.contains("stop_at_eps")) cfg.stop_at_eps = get_as<bool>(j.at("stop_at_eps"), "stop_at_eps");
    return cfg;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    return apply_config_json(std::move(base), j);
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["suite"] = {{"family", detail::to_string(c.suite.family)},
                  {"m", c.suite.m},
                  {"d", c.suite.d},
                  {"heterogeneity", c.suite.heterogeneity},
                  {"mu", c.suite.mu},
                  {"L1", c.suite.L1},
                  {"samples_per_node", c.suite.samples_per_node},
                  {"mu_reg", c.suite.mu_reg},
                  {"label_noise", c.suite.label_noise},
                  {"feature_scale", c.suite.feature_scale}};
    j["topology"] = {{"kind", c.topology.kind},         {"graph", c.topology.graph},
                     {"tau", c.topology.tau},           {"radius", c.topology.radius},
                     {"edge_prob", c.topology.edge_prob}, {"chebyshev", c.topology.chebyshev}};
    j["algorithm"] = to_string(c.algorithm);
    j["eps"] = c.eps;
    j["mode"] = to_string(c.mode);
    j["backend"] = c.backend.str();
    j["seed"] = c.seed;
    j["out"] = c.out;
    j["solver_tol"] = c.solver_tol;
    j["L"] = c.L ? nlohmann::json(*c.L) : nlohmann::json(nullptr);
    j["x0"] = c.x0;
    j["ref_tol"] = c.ref_tol;
    j["workers"] = c.workers;
    j["max_steps"] = c.max_steps;
    j["stop_at_eps"] = c.stop_at_eps;
    return j;
}

inline BaseGraph parse_base_graph(const std::string& s) {
    if (s == "ring") return BaseGraph::ring;
    if (s == "complete") return BaseGraph::complete;
    if (s == "path") return BaseGraph::path;
    if (s == "random-geometric") return BaseGraph::random_geometric;
    throw ConfigError("config: unknown graph '" + s + "'");
}

inline ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "static") return ScheduleKind::static_graph;
    if (s == "tau-connected") return ScheduleKind::tau_connected;
    if (s == "per-step") return ScheduleKind::per_step_connected;
    throw ConfigError("config: unknown topology kind '" + s + "'");
}

inline TopologySchedule build_schedule(const RunConfig& c) {
    TopologyParams p;
    p.m = c.suite.m;
    p.base = parse_base_graph(c.topology.graph);
    p.tau = c.topology.tau;
    p.radius = c.topology.radius;
    p.edge_prob = c.topology.edge_prob;
    return generate(parse_schedule_kind(c.topology.kind), p, detail::splitmix64(c.seed + 1));
}

inline void validate(const RunConfig& c) {
    if (!(c.eps > 0)) throw ConfigError("config: eps must be positive");
    if (!(c.solver_tol > 0)) throw ConfigError("config: solver_tol must be positive");
    if (!(c.ref_tol > 0)) throw ConfigError("config: ref_tol must be positive");
    if (c.workers < 1) throw ConfigError("config: workers must be >= 1");
    if (c.topology.chebyshev < 0) throw ConfigError("config: chebyshev degree must be >= 0");
    if (c.L && *c.L < 0) throw ConfigError("config: L must be nonnegative");
    if (c.backend.kind == "glm" && c.suite.family != SuiteFamily::logistic)
        throw ConfigError("config: the glm backend needs a logistic suite");
    if (c.backend.topk && *c.backend.topk > c.suite.samples_per_node)
        throw ConfigError("config: top-k count exceeds samples per node");
}

struct RunResult {
    MetricsTrace trace;
    nlohmann::json params;
    int exit_code = 0;
};

namespace detail {

inline nlohmann::json round_plan_json(const RoundPlan& r) {
    return {{"Tx", r.Tx}, {"Tg", r.Tg}, {"TH", r.TH}, {"Tx_real", r.Tx_real}, {"Tg_real", r.Tg_real},
            {"TH_real", r.TH_real}};
}

inline nlohmann::json round_plan_json(const AccRoundPlan& r) {
    return {{"Tv", r.Tv},           {"Tg_v", r.Tg_v},           {"TH_v", r.TH_v},           {"Tg_x", r.Tg_x},
            {"Tv_real", r.Tv_real}, {"Tg_v_real", r.Tg_v_real}, {"TH_v_real", r.TH_v_real}, {"Tg_x_real", r.Tg_x_real}};
}

inline nlohmann::json finite_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline nlohmann::json params_to_json(const DcnParams& p) {
    nlohmann::json j = {{"regime", to_string(p.regime)},
                        {"delta1", p.delta1},
                        {"delta2", p.delta2},
                        {"gamma", p.gamma},
                        {"L", p.Lreg},
                        {"N", p.N},
                        {"steps", p.steps()},
                        {"solved", p.solved},
                        {"alpha", p.alpha},
                        {"eps", p.eps},
                        {"gap0", p.gap0},
                        {"target_x", detail::finite_or_null(p.target_x)},
                        {"target_g", detail::finite_or_null(p.target_g)},
                        {"target_H", detail::finite_or_null(p.target_H)},
                        {"measured_deltas", p.measured_deltas}};
    j["rounds"] = p.rounds ? detail::round_plan_json(*p.rounds) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json params_to_json(const AdcnParams& p) {
    nlohmann::json j = {{"regime", "accelerated"},
                        {"alpha", p.alpha},
                        {"kappa2", p.kappa2},
                        {"kappa3", p.kappa3},
                        {"L", p.Lreg},
                        {"delta2", p.delta2},
                        {"N", p.N},
                        {"steps", p.steps()},
                        {"C", p.C},
                        {"eps", p.eps},
                        {"gap0", p.gap0},
                        {"mu_bar", p.mu_bar},
                        {"R_bar", p.R_bar},
                        {"solved", p.solved},
                        {"target_v", detail::finite_or_null(p.target_v)},
                        {"target_g_v", detail::finite_or_null(p.target_g_v)},
                        {"target_H_v", detail::finite_or_null(p.target_H_v)},
                        {"target_g_x", detail::finite_or_null(p.target_g_x)},
                        {"measured_deltas", p.measured_deltas},
                        {"adaptive_alpha", p.adaptive_alpha}};
    j["rounds"] = p.rounds ? detail::round_plan_json(*p.rounds) : nlohmann::json(nullptr);
    return j;
}

/// Everything up to (not including) the outer loop, kept together so tests
/// can inspect the resolved pieces.
struct Experiment {
    RunConfig config;
    ProblemSuite suite;
    ReferenceSolution ref;
    std::unique_ptr<Communicator> comm;
    std::unique_ptr<HessianBackend> backend;
    std::optional<ReplicatedData> replication;
    Matrix X0;
};

inline Experiment prepare(const RunConfig& cfg) {
    validate(cfg);
    Experiment e;
    e.config = cfg;
    e.suite = make_suite(cfg.suite, cfg.seed);
    const Vector x0 = Vector::Constant(e.suite.dim(), cfg.x0);
    e.ref = reference_solve(e.suite, cfg.ref_tol, x0);
    TopologySchedule sched = build_schedule(cfg);
    std::optional<int> cheb;
    if (cfg.topology.chebyshev > 0) cheb = cfg.topology.chebyshev;
    e.comm = std::make_unique<Communicator>(std::move(sched), cheb);
    if (cfg.backend.kind == "glm") {
        e.replication = replicate_datasets(e.suite, e.comm->schedule());
        e.comm->charge(e.replication->cost);
        e.backend = std::make_unique<GlmHessianBackend>(*e.replication, cfg.backend.topk);
    } else {
        e.backend = std::make_unique<DenseHessianBackend>();
    }
    e.X0 = x0.transpose().replicate(static_cast<Index>(e.suite.size()), 1);
    return e;
}

/// Runs one experiment in memory (no files).
inline RunResult execute(const RunConfig& cfg) {
    Experiment e = prepare(cfg);
    const auto c = e.comm->contraction();
    DriverOptions opt;
    opt.workers = static_cast<std::size_t>(cfg.workers);
    opt.solver.tol = cfg.solver_tol;
    opt.max_steps = cfg.max_steps;
    if (cfg.stop_at_eps) opt.stop_below = cfg.eps;

    RunResult res;
    nlohmann::json sched;
    if (cfg.algorithm == Algorithm::adcn) {
        AdcnParams p = schedule_accelerated(e.ref, e.suite, cfg.eps);
        if (cfg.mode == Mode::analytic) {
            attach_planned_rounds(p, e.ref, e.suite, c);
        } else {
            p.measured_deltas = true;
            p.adaptive_alpha = true;
        }
        AdcnRunner runner(e.suite, e.ref, p, *e.comm, *e.backend, opt);
        res.trace = runner.run(e.X0);
        sched = params_to_json(p);
    } else {
        const double L = cfg.L ? *cfg.L : e.suite.L2_bar();
        DcnParams p = cfg.algorithm == Algorithm::dcn_convex ? schedule_convex(e.ref, e.suite, cfg.eps, L)
                                                             : schedule_strongly_convex(e.ref, e.suite, cfg.eps, L);
        if (cfg.mode == Mode::analytic)
            attach_planned_rounds(p, e.ref, e.suite, c);
        else
            p.measured_deltas = true;
        DcnRunner runner(e.suite, e.ref, p, *e.comm, *e.backend, opt);
        res.trace = runner.run(e.X0);
        sched = params_to_json(p);
    }

    nlohmann::json j;
    j["schema"] = kParamsSchema;
    j["schema_version"] = kParamsSchemaVersion;
    j["config"] = config_to_json(cfg);
    j["suite"] = {{"m", e.suite.size()},         {"d", e.suite.dim()},          {"L1_bar", e.suite.L1_bar()},
                  {"L2_bar", e.suite.L2_bar()},  {"mu_bar", e.suite.mu_bar()},  {"L1_max", e.suite.L1_max()},
                  {"L2_max", e.suite.L2_max()},  {"mu_hat", e.suite.mu_hat()}};
    j["reference"] = {{"f_star", e.ref.f_star}, {"D", e.ref.D},           {"R", e.ref.R},
                      {"R_bar", e.ref.R_bar},   {"zeta_g", e.ref.zeta_g}, {"zeta_H", e.ref.zeta_H},
                      {"iterations", e.ref.iterations}};
    j["contraction"] = {{"tau", c.tau}, {"lambda", c.lambda}};
    j["backend"] = e.backend->name();
    if (e.replication) j["replication"] = {{"steps", e.replication->steps}, {"cost", e.replication->cost}};
    j["schedule"] = sched;
    const auto& rows = res.trace.rows;
    j["result"] = {{"final_gap", res.trace.final_gap()},
                   {"target_reached", res.trace.target_reached()},
                   {"iterations", rows.empty() ? 0 : rows.back().iter},
                   {"total_rounds", e.comm->total_rounds()},
                   {"total_scalars", e.comm->total_scalars()}};
    j["warnings"] = res.trace.warnings;
    res.params = std::move(j);
    res.exit_code = res.trace.target_reached() ? 0 : 1;
    return res;
}

/// Writes trace.csv and params.json into `dir`.
inline void write_outputs(const RunResult& r, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream f(fs::path(dir) / "trace.csv", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (fs::path(dir) / "trace.csv").string());
        write_csv(f, r.trace);
    }
    {
        std::ofstream f(fs::path(dir) / "params.json", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (fs::path(dir) / "params.json").string());
        f << r.params.dump(2) << '\n';
    }
}

/// Full run: execute and write files. Returns the process exit code.
inline int run(const RunConfig& cfg, std::ostream& log) {
    RunResult r = execute(cfg);
    write_outputs(r, cfg.out);
    log << to_string(cfg.algorithm) << ": " << (r.trace.rows.empty() ? 0 : r.trace.rows.back().iter)
        << " iterations, final gap " << detail::fmt_double(r.trace.final_gap()) << " (target "
        << detail::fmt_double(cfg.eps) << "), " << r.params["result"]["total_rounds"].get<long long>()
        << " rounds, " << detail::fmt_double(r.params["result"]["total_scalars"].get<double>()) << " scalars\n";
    for (const auto& w : r.trace.warnings) log << "warning: " << w << '\n';
    return r.exit_code;
}

// ---------------------------------------------------------------------------
// compare

struct TraceInput {
    std::string label;
    MetricsTrace trace;
    std::optional<nlohmann::json> params;
};

/// Reads a run directory (trace.csv + optional params.json) or a CSV file.
inline TraceInput load_trace(const std::string& path) {
    namespace fs = std::filesystem;
    TraceInput in;
    in.label = path;
    fs::path csv = path;
    if (fs::is_directory(csv)) csv /= "trace.csv";
    std::ifstream f(csv);
    if (!f) throw ConfigError("compare: cannot open '" + csv.string() + "'");
    in.trace = read_csv(f);
    const fs::path pj = csv.parent_path() / "params.json";
    if (fs::exists(pj)) {
        std::ifstream pf(pj);
        try {
            in.params = nlohmann::json::parse(pf);
            in.trace.eps = in.params->at("config").at("eps").get<double>();
            in.trace.algorithm = in.params->at("config").at("algorithm").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("compare: malformed '" + pj.string() + "'");
        }
    }
    return in;
}

/// Summary: per-trace iteration/cost to the target plus gap curves aligned
/// by iteration and by cumulative cost.
inline nlohmann::json compare(const std::vector<TraceInput>& inputs, std::optional<double> target = std::nullopt) {
    nlohmann::json out;
    out["traces"] = nlohmann::json::array();
    if (inputs.empty()) {
        out["by_iteration"] = nlohmann::json::array();
        out["by_cost"] = nlohmann::json::array();
        return out;
    }
    std::size_t longest = 0;
    for (const auto& in : inputs) {
        const double eps = target ? *target : in.trace.eps;
        nlohmann::json t = {{"label", in.label},
                            {"algorithm", in.trace.algorithm},
                            {"eps", eps},
                            {"iterations", in.trace.rows.empty() ? 0 : in.trace.rows.back().iter},
                            {"final_gap", in.trace.final_gap()},
                            {"final_cost", in.trace.rows.empty() ? 0.0 : in.trace.rows.back().cost_cum}};
        const auto it = in.trace.first_below(eps);
        t["iterations_to_eps"] = it ? nlohmann::json(*it) : nlohmann::json(nullptr);
        const auto cost = in.trace.cost_to(eps);
        t["cost_to_eps"] = cost ? nlohmann::json(*cost) : nlohmann::json(nullptr);
        if (in.params && in.params->contains("schedule"))
            t["predicted_steps"] = in.params->at("schedule").value("steps", -1);
        out["traces"].push_back(std::move(t));
        longest = std::max(longest, in.trace.rows.size());
    }
    nlohmann::json by_it = nlohmann::json::array();
    for (std::size_t k = 0; k < longest; ++k) {
        nlohmann::json row = nlohmann::json::array({static_cast<int>(k)});
        for (const auto& in : inputs)
            row.push_back(k < in.trace.rows.size() ? nlohmann::json(in.trace.rows[k].gap) : nlohmann::json(nullptr));
        by_it.push_back(std::move(row));
    }
    out["by_iteration"] = std::move(by_it);
    nlohmann::json by_cost = nlohmann::json::array();
    for (const auto& in : inputs) {
        nlohmann::json curve = nlohmann::json::array();
        for (const auto& r : in.trace.rows) curve.push_back({r.cost_cum, r.gap});
        by_cost.push_back(std::move(curve));
    }
    out["by_cost"] = std::move(by_cost);
    return out;
}

// ---------------------------------------------------------------------------
// check: invariant suites on the configured problem

struct CheckResult {
    std::string name;
    bool ok = false;
    std::string detail;
};

inline std::vector<CheckResult> run_checks(const RunConfig& cfg) {
    validate(cfg);
    std::vector<CheckResult> out;
    auto add = [&](std::string name, const std::function<std::string()>& fn) {
        CheckResult r{std::move(name), false, ""};
        try {
            r.detail = fn();
            r.ok = r.detail.empty();
        } catch (const std::exception& e) {
            r.detail = e.what();
        }
        out.push_back(std::move(r));
    };
    const ProblemSuite suite = make_suite(cfg.suite, cfg.seed);
    std::mt19937_64 rng(detail::splitmix64(cfg.seed + 7));
    std::normal_distribution<double> nd(0.0, 1.0);
    auto randvec = [&](Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v(i) = nd(rng);
        return v;
    };

    add("finite-difference oracles", [&]() -> std::string {
        for (std::size_t i = 0; i < suite.size(); ++i) {
            const auto rep = finite_difference_check(suite[i], randvec(suite.dim()), 1e-5);
            if (rep.grad_rel_err > 1e-6 || rep.hess_rel_err > 1e-5)
                return "node " + std::to_string(i) + ": gradient err " + std::to_string(rep.grad_rel_err) +
                       ", Hessian err " + std::to_string(rep.hess_rel_err);
        }
        return "";
    });
    add("mixing matrices", [&]() -> std::string {
        const auto sched = build_schedule(cfg);
        for (int k = 0; k < 20; ++k) {
            const Matrix W = sched.mixing(k);
            if (!is_doubly_stochastic(W, 1e-12)) return "step " + std::to_string(k) + " not doubly stochastic";
            if (!is_compatible(W, sched.graph(k), 1e-12)) return "step " + std::to_string(k) + " not graph-compatible";
        }
        return "";
    });
    add("consensus contraction", [&]() -> std::string {
        Communicator comm(build_schedule(cfg));
        const auto c = comm.contraction();
        for (double target : {1e-2, 1e-4, 1e-6}) {
            Matrix U(cfg.suite.m, 3);
            for (Index i = 0; i < U.size(); ++i) U.data()[i] = nd(rng);
            const int T = rounds_for(frob_deviation(U), target, c.tau, c.lambda);
            ConsensusReport rep;
            comm.mix(U, T, &rep);
            if (rep.max_row_deviation > target) return "target " + std::to_string(target) + " missed";
        }
        return "";
    });
    add("cubic subproblem", [&]() -> std::string {
        for (int t = 0; t < 50; ++t) {
            const Index d = 1 + static_cast<Index>(t % 8);
            Matrix B(d, d);
            for (Index i = 0; i < B.size(); ++i) B.data()[i] = nd(rng);
            CubicModel model{randvec(d), B * B.transpose(), std::abs(nd(rng)), 0.1 + std::abs(nd(rng)),
                             Vector::Zero(d)};
            const Vector s = solve_cubic(model, CubicSolveOptions{1e-10});
            if (stationarity_residual(model, s) > 1e-8 * (1 + model.g.norm())) return "residual too large";
        }
        return "";
    });
    add("estimating function replay", [&]() -> std::string {
        const Index d = suite.dim();
        const double mu = 0.7;
        PsiState st = psi_init(randvec(d), 0.5, 0.3);
        std::vector<std::tuple<double, Vector, Vector>> terms;
        double A = 1.0;
        for (int k = 0; k < 6; ++k) {
            const double a = 0.3;
            A *= 1 - a;
            const Vector g = randvec(d), x = randvec(d);
            st = psi_update(st, a, A, 0.5, 0.3, mu, g, x);
            terms.emplace_back(a / A, g, x);
        }
        auto direct = [&](const Vector& x) {
            const double n = (x - st.center0).norm();
            double v = 0.25 * n * n + 0.05 * n * n * n;
            for (const auto& [w, g, xj] : terms) v += w * (g.dot(x - xj) + 0.5 * mu * (x - xj).squaredNorm());
            return v;
        };
        const Vector p0 = randvec(d);
        for (int t = 0; t < 10; ++t) {
            const Vector p = randvec(d);
            const double lhs = psi_value(st, p) - psi_value(st, p0);
            const double rhs = direct(p) - direct(p0);
            if (std::abs(lhs - rhs) > 1e-9 * std::max(1.0, std::abs(rhs))) return "replay mismatch";
        }
        if (psi_gradient(st, psi_argmin(st)).norm() > 1e-8 * (1 + st.linear_term().norm()))
            return "argmin not stationary";
        return "";
    });
    return out;
}

}  // namespace dcn
