// fdi: command-line front end.
//
//   fdi gen-data --config sim.json --out data/
//   fdi run      --config exp.json [--out runs/exp] [--seed N] [--jobs N] [--force]
//   fdi compare  runs/a runs/b [--metric mounted-precision|jammed-recall] [--out p.csv]
//   fdi report   runs/a runs/b --out report/
//
// Exit codes: 0 success, 1 usage, 2 configuration error, 3 data error,
// 4 runtime failure, 5 output exists (use --force).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "fdi/errors.hpp"
#include "fdi/records.hpp"
#include "fdi/report.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kRuntime = 4, kExists = 5 };

struct OutputExists : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw fdi::ConfigError(p.string() + ": cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path default_output(const std::string& leaf) {
    const char* root = std::getenv("FDI_OUTPUT_ROOT");
    return fs::path(root && *root ? root : "runs") / leaf;
}

// Files a run owns inside an experiment directory.
const char* const kRunArtifacts[] = {"config.json", "trials.jsonl", "summary.json", "model.ckpt", "report"};

void prepare_run_dir(const fs::path& dir, bool force) {
    bool occupied = false;
    for (const char* name : kRunArtifacts) occupied = occupied || fs::exists(dir / name);
    if (occupied && !force) throw OutputExists(dir.string() + " already holds results; pass --force to overwrite");
    for (const char* name : kRunArtifacts) fs::remove_all(dir / name);
    fs::create_directories(dir);
}

int gen_data(const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed, bool force) {
    fdi::SimulatorConfig sim = fdi::parse_simulator_config(read_text(config));
    if (seed) sim.seed = *seed;
    if (fs::exists(out / "manifest.csv") && !force)
        throw OutputExists((out / "manifest.csv").string() + " exists; pass --force to overwrite");
    if (force) {
        fs::remove(out / "manifest.csv");
        fs::remove_all(out / "samples");
    }
    const fdi::Dataset ds = fdi::simulate(sim);
    fdi::write_csv(ds, out);
    const auto c = ds.class_counts();
    std::cout << "wrote " << ds.size() << " samples to " << out.string() << "\n"
              << "mounted " << c[0] << ", not_mounted " << c[1] << ", jammed " << c[2] << "\n";
    return kOk;
}

int run(const fs::path& config, std::optional<fs::path> out, std::optional<std::uint64_t> seed, std::size_t jobs,
        bool force) {
    const auto cfgs = fdi::load_experiment_configs(config, seed);
    const bool grid = cfgs.size() > 1;
    const fs::path root = out ? *out : default_output(grid ? config.stem().string() : cfgs.front().name);

    std::vector<fs::path> dirs;
    for (const auto& c : cfgs) dirs.push_back(grid ? root / c.name : root);
    for (const auto& d : dirs) {
        bool occupied = false;
        for (const char* name : kRunArtifacts) occupied = occupied || fs::exists(d / name);
        if (occupied && !force) throw OutputExists(d.string() + " already holds results; pass --force to overwrite");
    }
    if (grid && fs::exists(root / "report") && !force)
        throw OutputExists((root / "report").string() + " exists; pass --force to overwrite");

    std::vector<fdi::ExperimentResult> results;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        const auto& cfg = cfgs[i];
        const fs::path& dir = dirs[i];
        prepare_run_dir(dir, force);
        {
            std::ofstream cj(dir / "config.json");
            cj << fdi::config_to_json(cfg) << '\n';
        }
        fdi::TrialLog log(dir / "trials.jsonl");
        fdi::OptimizeOptions opts;
        opts.jobs = jobs;
        opts.on_trial = [&](const fdi::TrialRecord& r) {
            log.append(r);
            std::cerr << "[" << cfg.name << "] trial " << r.index + 1 << "/" << cfg.trials;
            if (r.failed)
                std::cerr << " failed: " << r.error << "\n";
            else
                std::cerr << " objective " << r.objective << " (" << r.parameters << " parameters)\n";
        };
        fdi::ExperimentResult result = fdi::optimize(cfg, opts);
        fdi::write_summary(result, dir);
        fdi::write_report({result}, dir / "report");
        const auto row = fdi::metric_row(result);
        std::cout << cfg.name << ": best trial " << result.best_trial << ", mounted precision "
                  << row.mounted_precision.mean << " ± " << row.mounted_precision.sd << ", jammed recall "
                  << row.jammed_recall.mean << " ± " << row.jammed_recall.sd << "\n";
        result.final_model.reset();
        results.push_back(std::move(result));
    }
    if (grid) {
        fs::remove_all(root / "report");
        fdi::write_report(results, root / "report");
    }
    std::cout << "results in " << root.string() << "\n";
    return kOk;
}

int compare(const std::vector<std::string>& dirs, const std::string& metric_name, std::optional<fs::path> out,
            bool force) {
    const fdi::MetricSelector metric = fdi::parse_metric(metric_name);
    std::vector<fdi::ExperimentResult> results;
    for (const auto& d : dirs) results.push_back(fdi::load_result(d));
    if (results.size() < 2) throw fdi::ArgumentError("compare needs at least two result directories");
    const auto comps = fdi::compare(results, metric);
    std::cout << fdi::comparison_table_markdown(results, comps, metric);
    if (out) {
        if (fs::exists(*out) && !force) throw OutputExists(out->string() + " exists; pass --force to overwrite");
        std::ofstream f(*out);
        f << fdi::comparison_table_csv(results, comps, metric);
    }
    bool any = false;
    for (const auto& c : comps) {
        if (c.result) any = true;
        else std::cerr << "degenerate input: " << results[c.first].config.name << " vs "
                       << results[c.second].config.name << ": " << c.error << "\n";
    }
    return any ? kOk : kData;
}

int report(const std::vector<std::string>& dirs, const fs::path& out, bool force) {
    std::vector<fdi::ExperimentResult> results;
    for (const auto& d : dirs) results.push_back(fdi::load_result(d));
    if (fs::exists(out / "metrics.md") && !force) throw OutputExists(out.string() + " holds a report; pass --force");
    for (const auto& p : fdi::write_report(results, out)) std::cout << p.string() << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Failure detection and isolation experiments for threaded-fastener assembly"};
    app.require_subcommand(1);

    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
    bool force = false;
    std::string metric = "mounted-precision";
    std::vector<std::string> dirs;

    auto* gen = app.add_subcommand("gen-data", "Write a simulated dataset as manifest + per-sample CSV files");
    gen->add_option("--config", config, "Simulator config (JSON)")->required();
    gen->add_option("--out", out, "Output directory")->required();
    auto* gen_seed = gen->add_option("--seed", seed, "Override the simulator seed");
    gen->add_flag("--force", force, "Overwrite existing files");

    auto* runc = app.add_subcommand("run", "Run an experiment (or a grid) and write records and reports");
    runc->add_option("--config", config, "Experiment config (JSON)")->required();
    auto* run_out = runc->add_option("--out", out, "Output directory (default: $FDI_OUTPUT_ROOT/<name>)");
    auto* run_seed = runc->add_option("--seed", seed, "Override the master seed");
    runc->add_option("--jobs", jobs, "Parallel trial workers")->check(CLI::PositiveNumber);
    runc->add_flag("--force", force, "Overwrite existing results");

    auto* cmp = app.add_subcommand("compare", "Paired t-tests between result directories");
    cmp->add_option("dirs", dirs, "Result directories")->required()->expected(2, -1);
    cmp->add_option("--metric", metric, "mounted-precision or jammed-recall");
    auto* cmp_out = cmp->add_option("--out", out, "Also write the table as CSV");
    cmp->add_flag("--force", force, "Overwrite an existing CSV");

    auto* rep = app.add_subcommand("report", "Regenerate tables and charts from result directories");
    rep->add_option("dirs", dirs, "Result directories")->required()->expected(1, -1);
    rep->add_option("--out", out, "Report directory")->required();
    rep->add_flag("--force", force, "Overwrite an existing report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    auto opt_seed = [&](CLI::Option* o) { return o->count() ? std::optional<std::uint64_t>(seed) : std::nullopt; };
    try {
        if (*gen) return gen_data(config, out, opt_seed(gen_seed), force);
        if (*runc)
            return run(config, run_out->count() ? std::optional<fs::path>(out) : std::nullopt, opt_seed(run_seed), jobs,
                       force);
        if (*cmp) return compare(dirs, metric, cmp_out->count() ? std::optional<fs::path>(out) : std::nullopt, force);
        if (*rep) return report(dirs, out, force);
    } catch (const OutputExists& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExists;
    } catch (const fdi::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kConfig;
    } catch (const fdi::IngestionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const fdi::ArgumentError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const fdi::DegenerateInputError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
