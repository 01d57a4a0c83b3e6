// fanodyn CLI: run / check / sweep over declarative scenario files.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fanodyn/runner.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read scenario file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_diagnostics(const fanodyn::cli::ParseResult& pr) {
    for (const auto& d : pr.diagnostics) {
        std::cerr << (d.error ? "error" : "warning") << " (line " << d.line << ")";
        if (!d.key.empty()) std::cerr << " [" << d.key << "]";
        std::cerr << ": " << d.message << "\n";
    }
}

int run_one(const std::string& path, const std::string& out, int threads, bool strict,
            const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
    auto pr = fanodyn::cli::parse_scenario_with_overrides(read_file(path), overrides, strict);
    print_diagnostics(pr);
    if (!pr.ok()) return 2;
    fanodyn::cli::RunOptions opts;
    opts.out_dir = out;
    opts.threads = threads;
    opts.scenario_path = path;
    auto report = fanodyn::cli::run(*pr.scenario, opts);
    for (const auto& t : report.tasks) {
        std::cout << t.name << ": " << t.status;
        if (!t.error.empty()) std::cout << " (" << t.error << ")";
        std::cout << " [" << t.wall_ms << " ms]\n";
        for (const auto& w : t.warnings) std::cout << "  warning: " << w << "\n";
    }
    std::cout << "outputs in " << report.output_directory << "\n";
    return report.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"solver for exact non-Markovian open-system dynamics"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir, param;
    std::string values_csv;
    int threads = 1;
    bool strict = false;

    auto* run_cmd = app.add_subcommand("run", "execute a scenario");
    run_cmd->add_option("scenario", scenario_path, "scenario file")->required();
    run_cmd->add_option("--out", out_dir, "output directory (default: scenario/[output], $FANODYN_OUT)");
    run_cmd->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 256));
    run_cmd->add_flag("--strict", strict, "treat unknown keys as errors");

    auto* check_cmd = app.add_subcommand("check", "validate a scenario without running");
    check_cmd->add_option("scenario", scenario_path, "scenario file")->required();

    auto* sweep_cmd = app.add_subcommand("sweep", "run a scenario once per parameter value");
    sweep_cmd->add_option("scenario", scenario_path, "scenario file")->required();
    sweep_cmd->add_option("--param", param, "override path 'section.key'")->required();
    sweep_cmd->add_option("--values", values_csv, "comma-separated values")->required();
    sweep_cmd->add_option("--out", out_dir, "base output directory");
    sweep_cmd->add_option("--threads", threads, "worker threads")->check(CLI::Range(1, 256));
    sweep_cmd->add_flag("--strict", strict, "treat unknown keys as errors");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(check_cmd)) {
            auto pr = fanodyn::cli::parse_scenario(read_file(scenario_path), true);
            print_diagnostics(pr);
            if (!pr.ok()) return 2;
            std::cout << "scenario ok: " << pr.scenario->tasks.size() << " task(s), grid "
                      << pr.scenario->grid.n_steps << " x dt=" << pr.scenario->grid.dt << "\n";
            return 0;
        }
        if (app.got_subcommand(run_cmd)) return run_one(scenario_path, out_dir, threads, strict);
        if (app.got_subcommand(sweep_cmd)) {
            std::vector<std::string> values;
            {
                std::istringstream is(values_csv);
                std::string tok;
                while (std::getline(is, tok, ',')) values.push_back(tok);
            }
            if (values.empty()) {
                std::cerr << "error: --values is empty\n";
                return 2;
            }
            int worst = 0;
            for (const auto& v : values) {
                const std::string base = out_dir.empty() ? "fanodyn_sweep" : out_dir;
                const std::string out = base + "/" + param + "=" + v;
                std::cout << "== " << param << " = " << v << " ==\n";
                worst = std::max(worst, run_one(scenario_path, out, threads, strict, {{param, v}}));
            }
            return worst;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
