// censor-ekf: generate synthetic censored datasets, run the censored EKF,
// sweep seeds, and emit plot-ready tables.
//
// Exit codes: 0 success, 1 runtime failure, 2 validation/configuration error.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cekf/log.hpp"
#include "cekf/scenario.hpp"

namespace fs = std::filesystem;
using namespace cekf;

namespace {

constexpr const char* kConfigKeyHelp = R"(Configuration file keys (JSON, schema_version 1):
  schema_version            must be 1
  model                     oscillator | hcv | hiv
  parameters.<name>         override a model parameter (defaults ship with the model)
  truth.initial_state       true initial state, model coordinates (log10 for hcv/hiv)
  truth.process_noise_diag  simulation process-noise diagonal (default zeros)
  truth.param_steps[]       {name,time,value} piecewise-constant true-parameter changes
  times.t0|dt|count         observation grid t0+dt, ..., t0+dt*count
  times.explicit            explicit strictly-increasing observation times (overrides dt/count)
  channels[].name           observation channel (model-defined)
  channels[].noise_level    sigma = noise_level * RMS of the noiseless channel signal
  channels[].r_var          observation-noise variance assumed by the filter (required)
  channels[].detect_low     lower detection limit; measurements below it are censored
  channels[].detect_high    upper detection limit
  channels[].detect_low_eras[] {until,value} era-dependent lower limits
  channels[].stride|offset  observe every stride-th grid point starting at offset
  filter.initial_mean       filter initial state mean (base states)
  filter.initial_cov_diag   filter initial covariance diagonal (base states)
  filter.process_noise_diag filter process-noise diagonal (base states)
  filter.estimate[]         {name,transform,initial_guess,prior_var,process_noise}
                            transform: identity | log10 | tan; initial_guess in natural
                            units; prior_var/process_noise in transformed units
  filter.integrator_substeps RK4 substeps per inter-observation interval (default 20)
  filter.pruning.epsilon    censored-history pruning threshold (default 1e-4)
  filter.pruning.max_age    censored-history age limit in frames (default 50)
  filter.plain_ekf          true: ignore censor flags (baseline/reduction mode)
  seed                      master RNG seed; all randomness derives from it
  output.dataset|truth|results|summary|report   output file names

Environment: CENSOR_EKF_LOG=0|1|2 controls diagnostic verbosity on stderr.)";

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = ".";
    std::int64_t seed = -1;
    bool plain_ekf = false;
};

Json load_config_json(const CommonArgs& args) {
    std::ifstream in(args.config_path);
    if (!in) throw ConfigError("cannot open config: " + args.config_path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(args.config_path + ": " + e.what());
    }
    apply_overrides(j, args.overrides);
    if (args.seed >= 0) j["seed"] = args.seed;
    if (args.plain_ekf) j["filter"]["plain_ekf"] = true;
    return j;
}

Scenario load(const CommonArgs& args) {
    return parse_scenario(load_config_json(args), args.config_path);
}

fs::path out_path(const CommonArgs& args, const std::string& name) {
    fs::create_directories(args.out_dir);
    return fs::path(args.out_dir) / name;
}

void print_summary(const Json& summary) {
    std::printf("steps: %d  max history: %d\n", summary["steps"].get<int>(),
                summary["max_history_size"].get<int>());
    if (summary.contains("params")) {
        for (const auto& [name, pj] : summary["params"].items()) {
            std::printf("  %-10s = %.6g  [95%%: %.6g, %.6g]", name.c_str(),
                        pj["natural"].get<double>(), pj["natural_lo95"].get<double>(),
                        pj["natural_hi95"].get<double>());
            if (pj.contains("true")) {
                std::printf("  true = %.6g (%s)", pj["true"].get<double>(),
                            pj["interval_contains_truth"].get<bool>() ? "covered" : "missed");
            }
            std::printf("\n");
        }
    }
    if (summary.contains("rmse")) {
        std::printf("  rmse:");
        for (const auto& [name, v] : summary["rmse"].items()) {
            std::printf(" %s=%.4g", name.c_str(), v.get<double>());
        }
        std::printf("\n");
    }
}

int cmd_simulate(const CommonArgs& args) {
    Scenario sc = load(args);
    TruthTrajectory truth = simulate_truth(sc);
    std::map<std::string, double> sigmas;
    Dataset ds = make_observations(sc, truth, &sigmas);
    validate_dataset(ds);

    const fs::path dpath = out_path(args, sc.output_name("dataset", "dataset.csv"));
    const fs::path tpath = out_path(args, sc.output_name("truth", "truth.csv"));
    write_dataset(ds, dpath.string());
    write_truth(truth, tpath.string());

    int censored = 0;
    for (const auto& row : ds.rows) censored += row.censored ? 1 : 0;
    std::printf("wrote %s (%zu rows, %d censored) and %s\n", dpath.c_str(), ds.rows.size(),
                censored, tpath.c_str());
    for (const auto& [name, sigma] : sigmas) {
        std::printf("  channel %s: noise sigma = %.6g\n", name.c_str(), sigma);
    }
    return 0;
}

int cmd_filter(const CommonArgs& args, const std::string& dataset_path,
               const std::string& truth_path) {
    Scenario sc = load(args);
    const std::string dpath =
        dataset_path.empty() ? out_path(args, sc.output_name("dataset", "dataset.csv")).string()
                             : dataset_path;
    if (!fs::exists(dpath)) throw ConfigError("dataset file not found: " + dpath);
    Dataset ds = read_dataset(dpath);

    TruthTrajectory truth;
    bool have_truth = false;
    std::string tpath = truth_path;
    if (tpath.empty()) {
        const std::string candidate =
            out_path(args, sc.output_name("truth", "truth.csv")).string();
        if (fs::exists(candidate)) tpath = candidate;
    }
    if (!tpath.empty()) {
        if (!fs::exists(tpath)) throw ConfigError("truth file not found: " + tpath);
        NumericTable table = read_numeric_csv(tpath);
        const int tcol = table.column("time");
        truth.state_names = sc.model().state_names;
        for (const auto& est : sc.estimates) truth.param_names.push_back(est.param.name);
        for (const auto& row : table.rows) {
            truth.times.push_back(row[tcol]);
            Vector x(sc.model().state_dim);
            for (int d = 0; d < sc.model().state_dim; ++d) {
                x[d] = row[table.column(truth.state_names[d])];
            }
            truth.states.push_back(x);
            Vector pv(truth.param_names.size());
            for (std::size_t i = 0; i < truth.param_names.size(); ++i) {
                pv[static_cast<int>(i)] =
                    table.has_column(truth.param_names[i])
                        ? row[table.column(truth.param_names[i])]
                        : std::numeric_limits<double>::quiet_NaN();
            }
            truth.param_values.push_back(pv);
        }
        have_truth = true;
    }

    ScenarioRun run = run_filter_scenario(sc, ds, have_truth ? &truth : nullptr);

    const fs::path rpath = out_path(args, sc.output_name("results", "results.csv"));
    write_results(run.records, run.state_names, rpath.string());
    const fs::path spath = out_path(args, sc.output_name("summary", "summary.json"));
    std::ofstream sout(spath);
    sout << run.summary.dump(2) << "\n";

    std::printf("wrote %s and %s\n", rpath.c_str(), spath.c_str());
    print_summary(run.summary);
    return 0;
}

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::string token;
    std::stringstream ss(text);
    while (std::getline(ss, token, ',')) {
        const auto dash = token.find('-');
        if (dash != std::string::npos) {
            const std::uint64_t a = std::stoull(token.substr(0, dash));
            const std::uint64_t b = std::stoull(token.substr(dash + 1));
            if (b < a) throw ConfigError("bad seed range: " + token);
            for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
        } else if (!token.empty()) {
            seeds.push_back(std::stoull(token));
        }
    }
    if (seeds.empty()) throw ConfigError("empty seed range");
    std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size()) {
        throw ConfigError("duplicate seeds would overlap output paths");
    }
    return seeds;
}

int cmd_sweep(const CommonArgs& args, const std::string& seeds_text) {
    const std::vector<std::uint64_t> seeds = parse_seed_range(seeds_text);
    const Json base = load_config_json(args);
    { // validate once before spawning workers
        Json probe = base;
        parse_scenario(probe, args.config_path);
    }

    struct SeedOutcome {
        std::uint64_t seed = 0;
        bool ok = false;
        std::string error;
        Json summary;
    };
    std::vector<SeedOutcome> outcomes(seeds.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            SeedOutcome& oc = outcomes[i];
            oc.seed = seeds[i];
            try {
                Json cfg = base;
                cfg["seed"] = seeds[i];
                Scenario sc = parse_scenario(cfg, args.config_path);
                TruthTrajectory truth = simulate_truth(sc);
                Dataset ds = make_observations(sc, truth);
                ScenarioRun run = run_filter_scenario(sc, ds, &truth);

                const fs::path seed_dir = fs::path(args.out_dir) / ("seed_" + std::to_string(seeds[i]));
                fs::create_directories(seed_dir);
                write_dataset(ds, (seed_dir / sc.output_name("dataset", "dataset.csv")).string());
                write_truth(truth, (seed_dir / sc.output_name("truth", "truth.csv")).string());
                write_results(run.records, run.state_names,
                              (seed_dir / sc.output_name("results", "results.csv")).string());
                std::ofstream sout(seed_dir / sc.output_name("summary", "summary.json"));
                sout << run.summary.dump(2) << "\n";

                oc.summary = std::move(run.summary);
                oc.ok = true;
            } catch (const std::exception& e) {
                oc.error = e.what();
            }
        }
    };

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned n_workers = std::min<unsigned>(hw, seeds.size());
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    // collect metric names from the first success
    std::vector<std::string> metric_names;
    for (const auto& oc : outcomes) {
        if (!oc.ok) continue;
        if (oc.summary.contains("params")) {
            for (const auto& [name, _] : oc.summary["params"].items()) {
                metric_names.push_back("param_" + name);
            }
        }
        if (oc.summary.contains("rmse")) {
            for (const auto& [name, _] : oc.summary["rmse"].items()) {
                metric_names.push_back("rmse_" + name);
            }
        }
        break;
    }
    auto metric_value = [](const Json& summary, const std::string& metric) {
        if (metric.rfind("param_", 0) == 0) {
            return summary["params"][metric.substr(6)]["natural"].get<double>();
        }
        return summary["rmse"][metric.substr(5)].get<double>();
    };

    fs::create_directories(args.out_dir);
    const fs::path agg_path = fs::path(args.out_dir) / "sweep.csv";
    std::ofstream out(agg_path);
    out << "kind,seed,status";
    for (const auto& m : metric_names) out << ',' << m;
    out << '\n';

    std::vector<double> sums(metric_names.size(), 0.0), sums2(metric_names.size(), 0.0);
    int ok_count = 0;
    for (const auto& oc : outcomes) {
        out << "seed," << oc.seed << ',' << (oc.ok ? "ok" : "failed");
        if (oc.ok) {
            ++ok_count;
            for (std::size_t m = 0; m < metric_names.size(); ++m) {
                const double v = metric_value(oc.summary, metric_names[m]);
                sums[m] += v;
                sums2[m] += v * v;
                out << ',' << detail::format_double(v);
            }
        } else {
            for (std::size_t m = 0; m < metric_names.size(); ++m) out << ',';
            std::fprintf(stderr, "seed %llu failed: %s\n",
                         static_cast<unsigned long long>(oc.seed), oc.error.c_str());
        }
        out << '\n';
    }
    if (ok_count > 0) {
        out << "mean,,ok";
        for (std::size_t m = 0; m < metric_names.size(); ++m) {
            out << ',' << detail::format_double(sums[m] / ok_count);
        }
        out << '\n';
        out << "stddev,,ok";
        for (std::size_t m = 0; m < metric_names.size(); ++m) {
            const double mean = sums[m] / ok_count;
            const double var = std::max(sums2[m] / ok_count - mean * mean, 0.0);
            out << ',' << detail::format_double(std::sqrt(var));
        }
        out << '\n';
    }

    std::printf("sweep: %d/%zu seeds succeeded; wrote %s\n", ok_count, seeds.size(),
                agg_path.c_str());
    return ok_count == 0 ? 1 : 0;
}

int cmd_report(const CommonArgs& args, const std::vector<std::string>& results_paths,
               const std::string& truth_path, const std::string& dataset_path) {
    Scenario sc = load(args);
    if (results_paths.empty()) throw ConfigError("report: no results files given");

    NumericTable truth_table;
    bool have_truth = false;
    if (!truth_path.empty()) {
        truth_table = read_numeric_csv(truth_path);
        have_truth = true;
    }
    Dataset ds;
    bool have_ds = false;
    if (!dataset_path.empty()) {
        ds = read_dataset(dataset_path);
        have_ds = true;
    }

    for (const auto& rpath : results_paths) {
        if (!fs::exists(rpath)) throw ConfigError("results file not found: " + rpath);
        NumericTable results = read_numeric_csv(rpath);
        if (results.rows.empty()) throw ConfigError("results file is empty: " + rpath);
        std::string name = sc.output_name("report", "report.csv");
        if (results_paths.size() > 1) {
            name = fs::path(rpath).stem().string() + "_report.csv";
        }
        const fs::path opath = out_path(args, name);
        write_report(sc, results, have_truth ? &truth_table : nullptr, have_ds ? &ds : nullptr,
                     opath.string());
        std::printf("wrote %s\n", opath.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"censored-observation extended Kalman filter"};
    app.footer(kConfigKeyHelp);
    app.require_subcommand(1);

    CommonArgs args;
    std::string dataset_path, truth_path, seeds_text = "1";
    std::vector<std::string> results_paths;

    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        cmd->add_option("--config", args.config_path, "scenario config JSON")
            ->required(needs_config);
        cmd->add_option("--set", args.overrides, "override config key (key.path=value)");
        cmd->add_option("--out", args.out_dir, "output directory (default .)");
        cmd->add_option("--seed", args.seed, "override the config seed");
        cmd->add_flag("--plain-ekf", args.plain_ekf,
                      "disable the censored machinery (treat every value as exact)");
    };

    CLI::App* simulate = app.add_subcommand("simulate", "generate dataset + ground truth");
    add_common(simulate);

    CLI::App* filter = app.add_subcommand("filter", "run the censored filter on a dataset");
    add_common(filter);
    filter->add_option("--dataset", dataset_path, "dataset CSV (default: <out>/dataset.csv)");
    filter->add_option("--truth", truth_path, "truth CSV for error metrics (optional)");

    CLI::App* sweep = app.add_subcommand("sweep", "run many seeds and aggregate");
    add_common(sweep);
    sweep->add_option("--seeds", seeds_text, "seed list/range, e.g. 1-10 or 3,5,9")->required();

    CLI::App* report = app.add_subcommand("report", "emit plot-ready long-format series");
    add_common(report);
    report->add_option("--results", results_paths, "results CSV file(s)")->required();
    report->add_option("--truth", truth_path, "truth CSV (optional)");
    report->add_option("--dataset", dataset_path, "dataset CSV (optional)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(args);
        if (filter->parsed()) return cmd_filter(args, dataset_path, truth_path);
        if (sweep->parsed()) return cmd_sweep(args, seeds_text);
        if (report->parsed()) return cmd_report(args, results_paths, truth_path, dataset_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const FilterError& e) {
        std::fprintf(stderr, "filter error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
