#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cekf/scenario.hpp"

using namespace cekf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "cekf_scenario_tests";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Json oscillator_config(std::uint64_t seed = 1) {
    Json j;
    j["schema_version"] = 1;
    j["model"] = "oscillator";
    j["parameters"] = {{"alpha", 1.0}};
    j["truth"] = {{"initial_state", {0.0, 0.0}}};
    j["times"] = {{"t0", 0.0}, {"dt", 0.2}, {"count", 40}};
    j["channels"] = Json::array({Json{{"name", "x1"},
                                      {"noise_level", 0.3},
                                      {"r_var", 0.135},
                                      {"detect_low", 0.8}}});
    j["filter"] = {
        {"initial_mean", {0.0, 0.0}},
        {"initial_cov_diag", {1.0, 1.0}},
        {"process_noise_diag", {1e-5, 1e-5}},
        {"estimate", Json::array({Json{{"name", "alpha"},
                                       {"transform", "identity"},
                                       {"initial_guess", 0.5},
                                       {"prior_var", 1.0},
                                       {"process_noise", 1e-6}}})},
        {"integrator_substeps", 20},
        {"pruning", {{"epsilon", 1e-3}, {"max_age", 10}}},
    };
    j["seed"] = seed;
    return j;
}

}  // namespace

TEST(ScenarioConfig, ParsesAndValidates) {
    Scenario sc = parse_scenario(oscillator_config());
    EXPECT_EQ(sc.model_id, "oscillator");
    EXPECT_EQ(sc.count, 40);
    ASSERT_EQ(sc.estimates.size(), 1u);
    EXPECT_EQ(sc.estimates[0].param.name, "alpha");
    EXPECT_DOUBLE_EQ(sc.channels[0].low_limit_at(3.0), 0.8);
}

TEST(ScenarioConfig, UnknownKeyRejected) {
    Json j = oscillator_config();
    j["typo_key"] = 1;
    EXPECT_THROW(parse_scenario(j), ConfigError);

    Json j2 = oscillator_config();
    j2["filter"]["no_such"] = 1;
    EXPECT_THROW(parse_scenario(j2), ConfigError);
}

TEST(ScenarioConfig, NegativeNoiseRejected) {
    Json j = oscillator_config();
    j["channels"][0]["noise_level"] = -0.1;
    EXPECT_THROW(parse_scenario(j), ConfigError);
}

TEST(ScenarioConfig, UnknownParameterRejected) {
    Json j = oscillator_config();
    j["parameters"]["gamma"] = 2.0;
    EXPECT_THROW(parse_scenario(j), ConfigError);
}

TEST(ScenarioConfig, OverridesApplyAndValidate) {
    Json j = oscillator_config();
    apply_overrides(j, {"seed=7", "filter.pruning.epsilon=0.01", "channels.0.r_var=0.2"});
    Scenario sc = parse_scenario(j);
    EXPECT_EQ(sc.seed, 7u);
    EXPECT_DOUBLE_EQ(sc.pruning.epsilon, 0.01);
    EXPECT_DOUBLE_EQ(sc.channels[0].r_var, 0.2);

    EXPECT_THROW(apply_overrides(j, {"filter.nope.x=1"}), ConfigError);
    EXPECT_THROW(apply_overrides(j, {"malformed"}), ConfigError);
}

TEST(SimulateTruth, OscillatorMatchesClosedForm) {
    Scenario sc = parse_scenario(oscillator_config());
    TruthTrajectory truth = simulate_truth(sc);
    ASSERT_EQ(truth.times.size(), 41u);
    for (std::size_t i = 0; i < truth.times.size(); ++i) {
        const double t = truth.times[i];
        EXPECT_NEAR(truth.states[i][0], 1.0 - std::cos(2.0 * t), 1e-6);
        EXPECT_NEAR(truth.states[i][1], 2.0 * std::sin(2.0 * t), 1e-6);
    }
}

TEST(SimulateTruth, ZeroDriftConstant) {
    Json j = oscillator_config();
    j["parameters"]["alpha"] = 0.0;
    // alpha = 0 freezes x1 only; check x1 constant from a nonzero start
    j["truth"]["initial_state"] = {0.7, 0.0};
    Scenario sc = parse_scenario(j);
    TruthTrajectory truth = simulate_truth(sc);
    for (const auto& x : truth.states) EXPECT_DOUBLE_EQ(x[0], 0.7);
}

TEST(SimulateTruth, DeterministicWithProcessNoise) {
    Json j = oscillator_config(33);
    j["truth"]["process_noise_diag"] = {1e-3, 1e-3};
    Scenario sc = parse_scenario(j);
    TruthTrajectory a = simulate_truth(sc);
    TruthTrajectory b = simulate_truth(sc);
    for (std::size_t i = 0; i < a.states.size(); ++i) {
        EXPECT_EQ((a.states[i] - b.states[i]).cwiseAbs().maxCoeff(), 0.0);
    }
    // and actually stochastic: differs from the noiseless trajectory
    Json j2 = oscillator_config(33);
    Scenario sc2 = parse_scenario(j2);
    TruthTrajectory c = simulate_truth(sc2);
    EXPECT_GT((a.states.back() - c.states.back()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MakeObservations, NoiselessUncensoredEqualsSignal) {
    Json j = oscillator_config();
    j["channels"][0]["noise_level"] = 0.0;
    j["channels"][0].erase("detect_low");
    Scenario sc = parse_scenario(j);
    TruthTrajectory truth = simulate_truth(sc);
    Dataset ds = make_observations(sc, truth);
    ASSERT_EQ(ds.rows.size(), 40u);
    for (std::size_t k = 0; k < ds.rows.size(); ++k) {
        EXPECT_FALSE(ds.rows[k].censored);
        EXPECT_NEAR(ds.rows[k].value, truth.states[k + 1][0], 1e-12);
    }
}

TEST(MakeObservations, CensorsBelowLimitWithLimitValue) {
    Scenario sc = parse_scenario(oscillator_config(4));
    TruthTrajectory truth = simulate_truth(sc);
    Dataset ds = make_observations(sc, truth);
    int censored = 0;
    for (const auto& row : ds.rows) {
        if (row.censored) {
            ++censored;
            EXPECT_EQ(row.value, 0.8);
            EXPECT_EQ(row.limit_high, 0.8);
            EXPECT_TRUE(std::isinf(row.limit_low));
        } else {
            EXPECT_GE(row.value, 0.8);
        }
    }
    EXPECT_GT(censored, 5);
    EXPECT_LT(censored, 35);
}

TEST(MakeObservations, CensoringIdempotent) {
    Scenario sc = parse_scenario(oscillator_config(4));
    TruthTrajectory truth = simulate_truth(sc);
    Dataset ds = make_observations(sc, truth);
    // re-applying the limit changes nothing: every censored value sits at the
    // limit and every uncensored value is inside the window
    for (const auto& row : ds.rows) {
        const double v = row.value;
        const bool would_censor = v < 0.8;
        EXPECT_EQ(would_censor && !row.censored, false);
    }
}

TEST(MakeObservations, CensorFractionTracksTruthFraction) {
    // across seeds, the censored fraction should approximate the fraction of
    // noisy signals below the limit; compare against the truth-based fraction
    int censored = 0, total = 0;
    double truth_below = 0;
    for (int seed = 1; seed <= 10; ++seed) {
        Json j = oscillator_config(seed);
        j["times"]["count"] = 150;
        Scenario sc = parse_scenario(j);
        TruthTrajectory truth = simulate_truth(sc);
        Dataset ds = make_observations(sc, truth);
        for (std::size_t k = 0; k < ds.rows.size(); ++k) {
            censored += ds.rows[k].censored ? 1 : 0;
            truth_below += (truth.states[k + 1][0] < 0.8) ? 1 : 0;
            ++total;
        }
    }
    const double frac = double(censored) / total;
    const double frac_truth = truth_below / total;
    EXPECT_NEAR(frac, frac_truth, 0.05);
}

TEST(DatasetIo, RoundTripIdentity) {
    Scenario sc = parse_scenario(oscillator_config(6));
    TruthTrajectory truth = simulate_truth(sc);
    Dataset ds = make_observations(sc, truth);
    const std::string path = (temp_dir() / "roundtrip.csv").string();
    write_dataset(ds, path);
    Dataset back = read_dataset(path);
    ASSERT_EQ(back.rows.size(), ds.rows.size());
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        EXPECT_EQ(back.rows[i].time, ds.rows[i].time);
        EXPECT_EQ(back.rows[i].channel, ds.rows[i].channel);
        EXPECT_EQ(back.rows[i].value, ds.rows[i].value);
        EXPECT_EQ(back.rows[i].censored, ds.rows[i].censored);
        EXPECT_EQ(back.rows[i].limit_low, ds.rows[i].limit_low);
        EXPECT_EQ(back.rows[i].limit_high, ds.rows[i].limit_high);
    }
}

TEST(DatasetIo, DecreasingTimesRejected) {
    const std::string path = (temp_dir() / "bad_times.csv").string();
    std::ofstream out(path);
    out << "time,channel,value,censored,limit_low,limit_high\n";
    out << "1.0,x1,0.5,0,-inf,inf\n";
    out << "0.5,x1,0.6,0,-inf,inf\n";
    out.close();
    EXPECT_THROW(read_dataset(path), ParseError);
}

TEST(DatasetIo, CensoredRowWithInfiniteLimitsRejected) {
    const std::string path = (temp_dir() / "bad_limits.csv").string();
    std::ofstream out(path);
    out << "time,channel,value,censored,limit_low,limit_high\n";
    out << "1.0,x1,0.5,1,-inf,inf\n";
    out.close();
    EXPECT_THROW(read_dataset(path), ParseError);
}

TEST(DatasetIo, BadHeaderRejected) {
    const std::string path = (temp_dir() / "bad_header.csv").string();
    std::ofstream out(path);
    out << "time,channel,value\n";
    out.close();
    EXPECT_THROW(read_dataset(path), ParseError);
}

TEST(RunFilterScenario, ProducesSummaryWithParams) {
    Json j = oscillator_config(2);
    j["times"]["count"] = 30;
    Scenario sc = parse_scenario(j);
    TruthTrajectory truth = simulate_truth(sc);
    Dataset ds = make_observations(sc, truth);
    ScenarioRun run = run_filter_scenario(sc, ds, &truth);

    ASSERT_EQ(run.records.size(), 30u);
    ASSERT_TRUE(run.summary.contains("params"));
    ASSERT_TRUE(run.summary["params"].contains("alpha"));
    EXPECT_TRUE(run.summary["params"]["alpha"].contains("natural"));
    EXPECT_TRUE(run.summary["params"]["alpha"].contains("interval_contains_truth"));
    EXPECT_TRUE(run.summary.contains("rmse"));
    EXPECT_GT(run.summary["censored_steps"].get<int>(), 0);
}

TEST(ResultsIo, WriteAndReadBack) {
    Json j = oscillator_config(2);
    j["times"]["count"] = 12;
    Scenario sc = parse_scenario(j);
    TruthTrajectory truth = simulate_truth(sc);
    Dataset ds = make_observations(sc, truth);
    ScenarioRun run = run_filter_scenario(sc, ds, &truth);

    const std::string rpath = (temp_dir() / "results.csv").string();
    write_results(run.records, run.state_names, rpath);
    NumericTable table = read_numeric_csv(rpath);
    ASSERT_EQ(table.rows.size(), run.records.size());
    const int mean_alpha = table.column("mean_alpha");
    EXPECT_EQ(table.rows.back()[mean_alpha], run.records.back().corrected.mean[2]);

    // and a report emits all series
    const std::string tpath = (temp_dir() / "truth.csv").string();
    write_truth(truth, tpath);
    NumericTable ttable = read_numeric_csv(tpath);
    const std::string repath = (temp_dir() / "report.csv").string();
    write_report(sc, table, &ttable, &ds, repath);
    std::ifstream in(repath);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "series,variable,time,value");
    int lines = 0;
    std::string line;
    bool saw_truth_alpha = false, saw_obs = false;
    while (std::getline(in, line)) {
        ++lines;
        if (line.rfind("truth,alpha,", 0) == 0) saw_truth_alpha = true;
        if (line.rfind("observation", 0) == 0) saw_obs = true;
    }
    EXPECT_GT(lines, 12 * 4);
    EXPECT_TRUE(saw_truth_alpha);
    EXPECT_TRUE(saw_obs);
}
