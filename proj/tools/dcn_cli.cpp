// dcn_cli: run | compare | check
//
// Exit codes: 0 target reached / checks passed, 1 target missed / a check
// failed, 2 invalid configuration or usage, 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dcn/harness.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> algo;
    std::optional<double> eps;
    std::optional<std::string> mode;
    std::optional<std::string> backend;
    std::optional<int> workers;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON configuration file");
    cmd->add_option("--seed", o.seed, "Random seed");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--algo", o.algo, "dcn-convex | dcn-sc | adcn");
    cmd->add_option("--eps", o.eps, "Target accuracy");
    cmd->add_option("--mode", o.mode, "analytic | adaptive");
    cmd->add_option("--backend", o.backend, "dense | glm | glm-topk:K");
    cmd->add_option("--workers", o.workers, "Worker threads");
}

/// Precedence: flags > file > defaults.
dcn::RunConfig resolve(const Overrides& o) {
    dcn::RunConfig c;
    if (!o.config.empty()) c = dcn::load_config(o.config, c);
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.out = *o.out;
    if (o.algo) c.algorithm = dcn::parse_algorithm(*o.algo);
    if (o.eps) c.eps = *o.eps;
    if (o.mode) c.mode = dcn::parse_mode(*o.mode);
    if (o.backend) c.backend = dcn::parse_backend(*o.backend);
    if (o.workers) c.workers = *o.workers;
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decentralized cubic Newton simulator"};
    app.require_subcommand(1);

    Overrides run_o, check_o;
    auto* run_cmd = app.add_subcommand("run", "Run one experiment and write trace.csv / params.json");
    add_common(run_cmd, run_o);

    auto* check_cmd = app.add_subcommand("check", "Run the invariant suites on the configured problem");
    add_common(check_cmd, check_o);

    std::vector<std::string> traces;
    std::optional<double> cmp_eps;
    std::optional<std::string> cmp_out;
    auto* cmp_cmd = app.add_subcommand("compare", "Compare traces (run directories or CSV files)");
    cmp_cmd->add_option("traces", traces, "Run directories or trace CSV files");
    cmp_cmd->add_option("--eps", cmp_eps, "Target gap (default: each run's eps)");
    cmp_cmd->add_option("--out", cmp_out, "Write compare.json into this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run_cmd) return dcn::run(resolve(run_o), std::cout);

        if (*check_cmd) {
            const auto results = dcn::run_checks(resolve(check_o));
            bool ok = true;
            for (const auto& r : results) {
                std::cout << (r.ok ? "PASS " : "FAIL ") << r.name;
                if (!r.ok) std::cout << ": " << r.detail;
                std::cout << '\n';
                ok = ok && r.ok;
            }
            return ok ? 0 : 1;
        }

        if (*cmp_cmd) {
            std::vector<dcn::TraceInput> inputs;
            for (const auto& t : traces) inputs.push_back(dcn::load_trace(t));
            const auto summary = dcn::compare(inputs, cmp_eps);
            if (cmp_out) {
                std::filesystem::create_directories(*cmp_out);
                std::ofstream f(std::filesystem::path(*cmp_out) / "compare.json", std::ios::binary);
                f << summary.dump(2) << '\n';
            }
            for (const auto& t : summary["traces"]) {
                std::cout << t["label"].get<std::string>() << " [" << t["algorithm"].get<std::string>()
                          << "]: iterations to eps = " << t["iterations_to_eps"].dump()
                          << ", cost to eps = " << t["cost_to_eps"].dump()
                          << ", final gap = " << t["final_gap"].dump() << '\n';
            }
            return 0;
        }
    } catch (const dcn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 2;
}
