// Scenario configuration (strict JSON), synthetic-data generation, and the
// end-to-end filtering pipeline shared by the CLI and the acceptance suite.
//
// A scenario fully determines an experiment: model and parameter table, truth
// simulation settings, observation cadences with noise and detection limits,
// and the filter's tuning knobs. All randomness flows from the single `seed`.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cekf/dataset.hpp"
#include "cekf/models.hpp"

namespace cekf {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct EraLimit {
    double until = kInf;  // era applies to times strictly below this
    double value = -kInf;
};

struct ChannelConfig {
    std::string name;
    double noise_level = 0.0;  // sigma = noise_level * RMS of the noiseless signal
    double r_var = 0.0;        // observation-noise variance the filter assumes
    double detect_low = -kInf;
    double detect_high = kInf;
    std::vector<EraLimit> detect_low_eras;  // when nonempty, replaces detect_low
    int stride = 1;  // observe every stride-th grid point
    int offset = 0;  // starting at this grid index

    double low_limit_at(double t) const {
        if (detect_low_eras.empty()) return detect_low;
        for (const auto& era : detect_low_eras) {
            if (t < era.until) return era.value;
        }
        return detect_low_eras.back().value;
    }
};

struct ParamStep {
    std::string name;
    double time = 0.0;
    double value = 0.0;
};

struct EstimateConfig {
    EstimatedParam param;        // name, transform, process noise (transformed units)
    double initial_guess = 0.0;  // natural units
    double prior_var = 1.0;      // transformed units
};

struct Scenario {
    std::string model_id;
    ParamTable parameters;  // model defaults merged with config overrides

    Vector truth_initial;   // model coordinates
    Vector truth_q_diag;    // simulation process noise (diagonal), may be zero
    std::vector<ParamStep> param_steps;

    double t0 = 0.0;
    double dt = 1.0;
    int count = 0;
    std::vector<double> explicit_times;  // overrides t0/dt/count when nonempty

    std::vector<ChannelConfig> channels;

    Vector filter_initial_mean;      // base state, model coordinates
    Vector filter_initial_cov_diag;  // base state
    Vector filter_q_diag;            // base state
    std::vector<EstimateConfig> estimates;
    int substeps = 20;
    PruningPolicy pruning;
    bool plain_ekf = false;

    std::uint64_t seed = 1;
    std::map<std::string, std::string> output;

    const ModelDef& model() const { return get_model(model_id); }

    std::vector<double> obs_times() const {
        if (!explicit_times.empty()) return explicit_times;
        std::vector<double> times(count);
        for (int k = 0; k < count; ++k) times[k] = t0 + dt * (k + 1);
        return times;
    }

    std::string output_name(const std::string& kind, const std::string& fallback) const {
        auto it = output.find(kind);
        return it != output.end() ? it->second : fallback;
    }
};

namespace detail {

inline void check_keys(const Json& j, const std::set<std::string>& allowed,
                       const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) {
            throw ConfigError(path + ": unknown key '" + key + "'");
        }
    }
}

inline double as_number(const Json& j, const std::string& path) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
    }
    throw ConfigError(path + ": expected a number");
}

inline Vector as_vector(const Json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
    Vector v(j.size());
    int i = 0;
    for (const auto& e : j) v[i++] = as_number(e, path);
    return v;
}

}  // namespace detail

inline Scenario parse_scenario(const Json& j, const std::string& source = "<config>") {
    using detail::as_number;
    using detail::as_vector;
    using detail::check_keys;

    check_keys(j, {"schema_version", "model", "parameters", "truth", "times", "channels",
                   "filter", "seed", "output"},
               source);
    if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
        j["schema_version"].get<int>() != 1) {
        throw ConfigError(source + ": schema_version must be the integer 1");
    }
    if (!j.contains("model")) throw ConfigError(source + ": missing 'model'");

    Scenario sc;
    sc.model_id = j["model"].get<std::string>();
    const ModelDef& def = sc.model();

    sc.parameters = def.defaults;
    if (j.contains("parameters")) {
        for (const auto& [key, val] : j["parameters"].items()) {
            if (!sc.parameters.count(key)) {
                throw ConfigError(source + ": parameters: model '" + sc.model_id +
                                  "' has no parameter '" + key + "'");
            }
            sc.parameters[key] = as_number(val, source + ": parameters." + key);
        }
    }

    // truth
    if (!j.contains("truth")) throw ConfigError(source + ": missing 'truth'");
    {
        const Json& t = j["truth"];
        check_keys(t, {"initial_state", "process_noise_diag", "param_steps"}, source + ": truth");
        sc.truth_initial = as_vector(t.at("initial_state"), source + ": truth.initial_state");
        if (sc.truth_initial.size() != def.state_dim) {
            throw ConfigError(source + ": truth.initial_state must have length " +
                              std::to_string(def.state_dim));
        }
        sc.truth_q_diag = t.contains("process_noise_diag")
                              ? as_vector(t["process_noise_diag"], source)
                              : Vector(Vector::Zero(def.state_dim));
        if (sc.truth_q_diag.size() != def.state_dim || sc.truth_q_diag.minCoeff() < 0.0) {
            throw ConfigError(source + ": truth.process_noise_diag invalid");
        }
        if (t.contains("param_steps")) {
            for (const auto& e : t["param_steps"]) {
                check_keys(e, {"name", "time", "value"}, source + ": truth.param_steps[]");
                ParamStep step;
                step.name = e.at("name").get<std::string>();
                if (!sc.parameters.count(step.name)) {
                    throw ConfigError(source + ": param_steps: unknown parameter '" + step.name +
                                      "'");
                }
                step.time = as_number(e.at("time"), source);
                step.value = as_number(e.at("value"), source);
                sc.param_steps.push_back(step);
            }
        }
    }

    // times
    if (!j.contains("times")) throw ConfigError(source + ": missing 'times'");
    {
        const Json& t = j["times"];
        check_keys(t, {"t0", "dt", "count", "explicit"}, source + ": times");
        if (t.contains("explicit")) {
            const Vector v = as_vector(t["explicit"], source + ": times.explicit");
            sc.explicit_times.assign(v.data(), v.data() + v.size());
            if (t.contains("t0")) sc.t0 = as_number(t["t0"], source);
            for (std::size_t i = 0; i < sc.explicit_times.size(); ++i) {
                const double prev = i == 0 ? sc.t0 : sc.explicit_times[i - 1];
                if (!(sc.explicit_times[i] > prev)) {
                    throw ConfigError(source + ": times.explicit must be strictly increasing");
                }
            }
            sc.count = static_cast<int>(sc.explicit_times.size());
        } else {
            sc.t0 = t.contains("t0") ? as_number(t["t0"], source) : 0.0;
            sc.dt = as_number(t.at("dt"), source);
            sc.count = t.at("count").get<int>();
            if (!(sc.dt > 0.0) || sc.count < 1) {
                throw ConfigError(source + ": times.dt must be positive, count >= 1");
            }
        }
    }

    // channels
    if (!j.contains("channels") || !j["channels"].is_array() || j["channels"].empty()) {
        throw ConfigError(source + ": missing 'channels'");
    }
    for (const auto& cj : j["channels"]) {
        check_keys(cj,
                   {"name", "noise_level", "r_var", "detect_low", "detect_high",
                    "detect_low_eras", "stride", "offset"},
                   source + ": channels[]");
        ChannelConfig ch;
        ch.name = cj.at("name").get<std::string>();
        def.channel_index(ch.name);  // validates the channel exists
        if (cj.contains("noise_level")) ch.noise_level = as_number(cj["noise_level"], source);
        if (ch.noise_level < 0.0) throw ConfigError(source + ": noise_level must be >= 0");
        if (cj.contains("r_var")) ch.r_var = as_number(cj["r_var"], source);
        if (!(ch.r_var > 0.0)) {
            throw ConfigError(source + ": channels." + ch.name + ".r_var must be positive");
        }
        if (cj.contains("detect_low")) ch.detect_low = as_number(cj["detect_low"], source);
        if (cj.contains("detect_high")) ch.detect_high = as_number(cj["detect_high"], source);
        if (cj.contains("detect_low_eras")) {
            for (const auto& ej : cj["detect_low_eras"]) {
                check_keys(ej, {"until", "value"}, source + ": detect_low_eras[]");
                EraLimit era;
                era.until = as_number(ej.at("until"), source);
                era.value = as_number(ej.at("value"), source);
                ch.detect_low_eras.push_back(era);
            }
        }
        if (cj.contains("stride")) ch.stride = cj["stride"].get<int>();
        if (cj.contains("offset")) ch.offset = cj["offset"].get<int>();
        if (ch.stride < 1 || ch.offset < 0) {
            throw ConfigError(source + ": stride must be >= 1 and offset >= 0");
        }
        sc.channels.push_back(std::move(ch));
    }

    // filter
    if (!j.contains("filter")) throw ConfigError(source + ": missing 'filter'");
    {
        const Json& f = j["filter"];
        check_keys(f,
                   {"initial_mean", "initial_cov_diag", "process_noise_diag", "estimate",
                    "integrator_substeps", "pruning", "plain_ekf"},
                   source + ": filter");
        sc.filter_initial_mean = as_vector(f.at("initial_mean"), source + ": filter.initial_mean");
        sc.filter_initial_cov_diag =
            as_vector(f.at("initial_cov_diag"), source + ": filter.initial_cov_diag");
        sc.filter_q_diag =
            as_vector(f.at("process_noise_diag"), source + ": filter.process_noise_diag");
        if (sc.filter_initial_mean.size() != def.state_dim ||
            sc.filter_initial_cov_diag.size() != def.state_dim ||
            sc.filter_q_diag.size() != def.state_dim) {
            throw ConfigError(source + ": filter state vectors must have length " +
                              std::to_string(def.state_dim));
        }
        if (sc.filter_initial_cov_diag.minCoeff() < 0.0 || sc.filter_q_diag.minCoeff() < 0.0) {
            throw ConfigError(source + ": filter covariances must be nonnegative");
        }
        if (f.contains("estimate")) {
            for (const auto& ej : f["estimate"]) {
                check_keys(ej,
                           {"name", "transform", "initial_guess", "prior_var", "process_noise"},
                           source + ": filter.estimate[]");
                EstimateConfig est;
                est.param.name = ej.at("name").get<std::string>();
                if (!sc.parameters.count(est.param.name)) {
                    throw ConfigError(source + ": estimate: unknown parameter '" +
                                      est.param.name + "'");
                }
                est.param.transform = parse_transform(ej.at("transform").get<std::string>());
                est.initial_guess = as_number(ej.at("initial_guess"), source);
                est.prior_var = as_number(ej.at("prior_var"), source);
                if (ej.contains("process_noise")) {
                    est.param.process_noise = as_number(ej["process_noise"], source);
                }
                if (!(est.prior_var > 0.0) || est.param.process_noise < 0.0) {
                    throw ConfigError(source + ": estimate variances must be positive");
                }
                sc.estimates.push_back(std::move(est));
            }
        }
        if (f.contains("integrator_substeps")) sc.substeps = f["integrator_substeps"].get<int>();
        if (sc.substeps < 1) throw ConfigError(source + ": integrator_substeps must be >= 1");
        if (f.contains("pruning")) {
            check_keys(f["pruning"], {"epsilon", "max_age"}, source + ": filter.pruning");
            if (f["pruning"].contains("epsilon")) {
                sc.pruning.epsilon = as_number(f["pruning"]["epsilon"], source);
            }
            if (f["pruning"].contains("max_age")) {
                sc.pruning.max_age = f["pruning"]["max_age"].get<int>();
            }
        }
        if (f.contains("plain_ekf")) sc.plain_ekf = f["plain_ekf"].get<bool>();
    }

    if (j.contains("seed")) sc.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("output")) {
        check_keys(j["output"], {"dataset", "truth", "results", "summary", "report"},
                   source + ": output");
        for (const auto& [key, val] : j["output"].items()) {
            sc.output[key] = val.get<std::string>();
        }
    }
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_scenario(j, path);
}

/// Apply `key.path=value` overrides onto the raw JSON document. The parent
/// object must already exist; the full document is re-validated afterwards.
inline void apply_overrides(Json& j, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("override '" + ov + "' is not of the form key=value");
        }
        const std::string path = ov.substr(0, eq);
        const std::string value = ov.substr(eq + 1);

        Json* node = &j;
        std::size_t start = 0;
        std::vector<std::string> segments;
        while (start <= path.size()) {
            const auto dot = path.find('.', start);
            segments.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
            if (dot == std::string::npos) break;
            start = dot + 1;
        }
        for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
            const std::string& seg = segments[i];
            if (node->is_array()) {
                const std::size_t idx = std::stoul(seg);
                if (idx >= node->size()) throw ConfigError("override path '" + path + "': index out of range");
                node = &(*node)[idx];
            } else if (node->is_object() && node->contains(seg)) {
                node = &(*node)[seg];
            } else {
                throw ConfigError("override path '" + path + "': no such key '" + seg + "'");
            }
        }
        Json parsed;
        try {
            parsed = Json::parse(value);
        } catch (const Json::parse_error&) {
            parsed = value;  // plain string
        }
        if (node->is_array()) {
            const std::size_t idx = std::stoul(segments.back());
            if (idx >= node->size()) throw ConfigError("override path '" + path + "': index out of range");
            (*node)[idx] = parsed;
        } else {
            (*node)[segments.back()] = parsed;
        }
    }
}

// ---------------------------------------------------------------------------
// Truth simulation
// ---------------------------------------------------------------------------

struct TruthTrajectory {
    std::vector<double> times;           // t0 followed by the observation grid
    std::vector<Vector> states;          // model coordinates
    std::vector<std::string> state_names;
    std::vector<std::string> param_names;  // estimated parameters
    std::vector<Vector> param_values;      // natural units, aligned with times
};

namespace detail {

inline ParamTable table_at_time(const Scenario& sc, double t) {
    ParamTable tb = sc.parameters;
    for (const auto& step : sc.param_steps) {
        if (t >= step.time) tb[step.name] = step.value;
    }
    return tb;
}

}  // namespace detail

/// Integrate the true system over the observation grid: RK4 when the process
/// noise is zero, Euler-Maruyama at substep resolution otherwise.
/// Deterministic for a fixed seed.
inline TruthTrajectory simulate_truth(const Scenario& sc) {
    const ModelDef& def = sc.model();
    const bool stochastic = sc.truth_q_diag.maxCoeff() > 0.0;

    DynamicsModel dyn;
    dyn.state_dim = def.state_dim;
    dyn.drift = [&sc, &def](double t, const Vector& x) {
        return def.drift(t, x, detail::table_at_time(sc, t));
    };
    dyn.jacobian = [&sc, &def](double t, const Vector& x) {
        return def.jacobian(t, x, detail::table_at_time(sc, t));
    };
    dyn.process_noise = Matrix::Zero(def.state_dim, def.state_dim);
    dyn.breakpoints = def.breakpoints(sc.parameters);
    for (const auto& step : sc.param_steps) dyn.breakpoints.push_back(step.time);

    TruthTrajectory truth;
    truth.state_names = def.state_names;
    for (const auto& est : sc.estimates) truth.param_names.push_back(est.param.name);

    const std::vector<double> grid = sc.obs_times();
    truth.times.push_back(sc.t0);
    truth.states.push_back(sc.truth_initial);

    Vector x = sc.truth_initial;
    const Matrix noise_sqrt = Matrix(sc.truth_q_diag.cwiseSqrt().asDiagonal());
    Rng rng(sc.seed, 0x7257ULL);  // truth-simulation stream

    double t_prev = sc.t0;
    for (double t_next : grid) {
        if (!stochastic) {
            FlowState s{x, Matrix(), Matrix()};
            integrate_flow(dyn, t_prev, t_next, IntegratorSettings{sc.substeps}, s);
            x = s.x;
        } else {
            const auto bounds = detail::segment_bounds(t_prev, t_next, dyn.breakpoints);
            for (std::size_t seg = 0; seg + 1 < bounds.size(); ++seg) {
                const double a = bounds[seg], b = bounds[seg + 1];
                const int steps = std::max<int>(
                    1, static_cast<int>(std::llround(sc.substeps * (b - a) /
                                                     std::max(t_next - t_prev, 1e-300))));
                const double h = (b - a) / steps;
                for (int i = 0; i < steps; ++i) {
                    const double t = a + i * h;
                    Vector noise(def.state_dim);
                    rng.fill_normal(noise.data(), def.state_dim);
                    x += h * dyn.drift(t, x) + std::sqrt(h) * (noise_sqrt * noise);
                    if (!x.allFinite()) throw IntegrationDivergedError(t + h, "euler-maruyama");
                }
            }
        }
        truth.times.push_back(t_next);
        truth.states.push_back(x);
        t_prev = t_next;
    }

    for (double t : truth.times) {
        const ParamTable tb = detail::table_at_time(sc, t);
        Vector pv(truth.param_names.size());
        for (std::size_t i = 0; i < truth.param_names.size(); ++i) {
            pv[static_cast<int>(i)] = tb.at(truth.param_names[i]);
        }
        truth.param_values.push_back(pv);
    }
    return truth;
}

// ---------------------------------------------------------------------------
// Observation generation
// ---------------------------------------------------------------------------

/// Noisy, censored observations of the truth. Per-channel noise is
/// sigma = noise_level * RMS of that channel's noiseless signal; measurements
/// falling outside the detection window are flagged censored with their value
/// replaced by the violated limit.
inline Dataset make_observations(const Scenario& sc, const TruthTrajectory& truth,
                                 std::map<std::string, double>* sigma_out = nullptr) {
    const ModelDef& def = sc.model();
    const std::vector<double> grid = sc.obs_times();

    Dataset ds;
    std::vector<std::vector<DatasetRow>> per_time(grid.size());

    for (std::size_t ci = 0; ci < sc.channels.size(); ++ci) {
        const ChannelConfig& ch = sc.channels[ci];
        const int model_ch = def.channel_index(ch.name);

        std::vector<int> indices;
        for (int k = ch.offset; k < static_cast<int>(grid.size()); k += ch.stride) {
            indices.push_back(k);
        }
        if (indices.empty()) continue;

        Vector clean(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i) {
            // truth.states[0] is the initial state; grid index k maps to k+1
            const Vector& x = truth.states[indices[i] + 1];
            clean[static_cast<int>(i)] = def.obs_map(x, {model_ch})[0];
        }
        const double rms = std::sqrt(clean.squaredNorm() / clean.size());
        const double sigma = ch.noise_level * rms;
        if (sigma_out) (*sigma_out)[ch.name] = sigma;

        Rng rng(sc.seed, 0x0B5ULL + ci);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const double t = grid[indices[i]];
            double v = clean[static_cast<int>(i)] + sigma * rng.normal();
            DatasetRow row;
            row.time = t;
            row.channel = ch.name;
            const double lo = ch.low_limit_at(t);
            const double hi = ch.detect_high;
            if (v < lo) {
                row.censored = true;
                row.value = lo;
                row.limit_low = -kInf;
                row.limit_high = lo;
            } else if (v > hi) {
                row.censored = true;
                row.value = hi;
                row.limit_low = hi;
                row.limit_high = kInf;
            } else {
                row.value = v;
            }
            per_time[indices[i]].push_back(row);
        }
    }

    for (auto& rows : per_time) {
        for (auto& row : rows) ds.rows.push_back(std::move(row));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Truth / results serialization
// ---------------------------------------------------------------------------

inline void write_truth(const TruthTrajectory& truth, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << "time";
    for (const auto& n : truth.state_names) out << ',' << n;
    for (const auto& n : truth.param_names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < truth.times.size(); ++i) {
        out << detail::format_double(truth.times[i]);
        for (int d = 0; d < truth.states[i].size(); ++d) {
            out << ',' << detail::format_double(truth.states[i][d]);
        }
        for (int d = 0; d < truth.param_values[i].size(); ++d) {
            out << ',' << detail::format_double(truth.param_values[i][d]);
        }
        out << '\n';
    }
}

/// Generic numeric CSV with a header row (used for truth and results files).
struct NumericTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i] == name) return static_cast<int>(i);
        }
        throw ConfigError("missing column '" + name + "'");
    }
    bool has_column(const std::string& name) const {
        return std::find(columns.begin(), columns.end(), name) != columns.end();
    }
};

inline NumericTable read_numeric_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open: " + path);
    NumericTable table;
    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) throw ParseError(path, 1, "empty file");
    ++lineno;
    for (const auto& c : detail::split_csv_line(line)) table.columns.push_back(c);
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != table.columns.size()) {
            throw ParseError(path, lineno, "wrong field count");
        }
        std::vector<double> row(fields.size());
        for (std::size_t i = 0; i < fields.size(); ++i) {
            row[i] = detail::parse_double(fields[i], path, lineno);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

/// Per-step results: corrected and naive means, covariance diagonal, 95%
/// interval bounds, history size, gain norms, and truncation diagnostics.
inline void write_results(const std::vector<FilterStepRecord>& records,
                          const std::vector<std::string>& state_names, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << "time,history_size,kalman_gain_norm,kprime_norm,trunc_error,trunc_mass,n_censored,"
           "n_uncensored";
    for (const auto& n : state_names) {
        out << ",mean_" << n << ",naive_" << n << ",var_" << n << ",lo95_" << n << ",hi95_" << n;
    }
    out << '\n';
    for (const auto& rec : records) {
        out << detail::format_double(rec.time) << ',' << rec.history_size << ','
            << detail::format_double(rec.kalman_gain_norm) << ','
            << detail::format_double(rec.kprime_norm) << ','
            << detail::format_double(rec.trunc_error) << ','
            << detail::format_double(rec.trunc_mass) << ',' << rec.n_censored << ','
            << rec.n_uncensored;
        for (int d = 0; d < rec.corrected.mean.size(); ++d) {
            const double sd = std::sqrt(std::max(rec.corrected.cov(d, d), 0.0));
            out << ',' << detail::format_double(rec.corrected.mean[d]) << ','
                << detail::format_double(rec.naive.mean[d]) << ','
                << detail::format_double(rec.corrected.cov(d, d)) << ','
                << detail::format_double(rec.corrected.mean[d] - 1.96 * sd) << ','
                << detail::format_double(rec.corrected.mean[d] + 1.96 * sd);
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// End-to-end filter run with summary metrics
// ---------------------------------------------------------------------------

struct ScenarioRun {
    std::vector<FilterStepRecord> records;
    std::vector<std::string> state_names;  // augmented
    DualModel dual;
    Json summary;
};

inline ScenarioRun run_filter_scenario(const Scenario& sc, const Dataset& ds,
                                       const TruthTrajectory* truth = nullptr) {
    const ModelDef& def = sc.model();
    const int n = def.state_dim;
    const int p = static_cast<int>(sc.estimates.size());

    std::vector<EstimatedParam> est_params;
    for (const auto& e : sc.estimates) est_params.push_back(e.param);

    ScenarioRun run;
    run.dual = augment_for_dual_estimation(def, sc.parameters, est_params,
                                           Matrix(sc.filter_q_diag.asDiagonal()));
    run.state_names = run.dual.state_names;

    GaussianBelief init;
    init.time = sc.t0;
    init.mean = Vector(n + p);
    init.mean.head(n) = sc.filter_initial_mean;
    Vector cov_diag(n + p);
    cov_diag.head(n) = sc.filter_initial_cov_diag;
    for (int i = 0; i < p; ++i) {
        init.mean[n + i] =
            transform_forward(sc.estimates[i].param.transform, sc.estimates[i].initial_guess);
        cov_diag[n + i] = sc.estimates[i].prior_var;
    }
    init.cov = Matrix(cov_diag.asDiagonal());

    std::map<std::string, double> r_by_name;
    for (const auto& ch : sc.channels) r_by_name[ch.name] = ch.r_var;

    const DynamicsModel& dyn = run.dual.dynamics;
    ObservationModelFactory factory = [&def, &r_by_name, n, p](const std::vector<int>& channels) {
        Matrix r = Matrix::Zero(channels.size(), channels.size());
        for (std::size_t i = 0; i < channels.size(); ++i) {
            r(static_cast<int>(i), static_cast<int>(i)) =
                r_by_name.at(def.channels[channels[i]]);
        }
        return augment_observation(make_observation(def, channels, r), n, p);
    };

    const auto frames = dataset_to_frames(
        ds, [&def](const std::string& name) { return def.channel_index(name); });

    FilterConfig fc;
    fc.integrator.substeps_per_interval = sc.substeps;
    fc.pruning = sc.pruning;
    fc.seed = sc.seed;
    fc.plain_ekf = sc.plain_ekf;
    run.records = filter_run(dyn, factory, init, frames, fc);

    // ---- summary ----
    Json summary;
    summary["model"] = sc.model_id;
    summary["seed"] = sc.seed;
    summary["steps"] = run.records.size();
    int max_hist = 0;
    double max_trunc_error = 0.0;
    for (const auto& rec : run.records) {
        max_hist = std::max(max_hist, rec.history_size);
        max_trunc_error = std::max(max_trunc_error, rec.trunc_error);
    }
    summary["max_history_size"] = max_hist;
    summary["max_trunc_error"] = max_trunc_error;

    if (!run.records.empty()) {
        const auto& last = run.records.back();
        summary["final_time"] = last.time;
        Json params = Json::object();
        for (int i = 0; i < p; ++i) {
            const auto& est = sc.estimates[i];
            const double q_mean = last.corrected.mean[n + i];
            const double q_sd = std::sqrt(std::max(last.corrected.cov(n + i, n + i), 0.0));
            Json pj;
            pj["transformed_mean"] = q_mean;
            pj["transformed_sd"] = q_sd;
            pj["natural"] = transform_inverse(est.param.transform, q_mean);
            pj["natural_lo95"] = transform_inverse(est.param.transform, q_mean - 1.96 * q_sd);
            pj["natural_hi95"] = transform_inverse(est.param.transform, q_mean + 1.96 * q_sd);
            params[est.param.name] = pj;
        }
        summary["params"] = params;
    }

    if (truth && !run.records.empty()) {
        // match truth rows to observation times
        std::map<long long, std::size_t> time_index;
        auto key = [](double t) { return static_cast<long long>(std::llround(t * 1e9)); };
        for (std::size_t i = 0; i < truth->times.size(); ++i) time_index[key(truth->times[i])] = i;

        Json rmse = Json::object(), rmse_cen = Json::object();
        Vector sq = Vector::Zero(n), sq_cen = Vector::Zero(n);
        int n_all = 0, n_cen = 0;
        for (const auto& rec : run.records) {
            auto it = time_index.find(key(rec.time));
            if (it == time_index.end()) continue;
            const Vector& xt = truth->states[it->second];
            const Vector err = rec.corrected.mean.head(n) - xt;
            sq += err.cwiseAbs2();
            ++n_all;
            if (rec.n_censored > 0) {
                sq_cen += err.cwiseAbs2();
                ++n_cen;
            }
        }
        for (int d = 0; d < n; ++d) {
            rmse[def.state_names[d]] = n_all ? std::sqrt(sq[d] / n_all) : 0.0;
            if (n_cen) rmse_cen[def.state_names[d]] = std::sqrt(sq_cen[d] / n_cen);
        }
        summary["rmse"] = rmse;
        summary["rmse_censored"] = rmse_cen;
        summary["censored_steps"] = n_cen;

        // parameter truth at the final time + interval containment
        if (!truth->param_values.empty() && p > 0) {
            const Vector& final_truth = truth->param_values.back();
            for (int i = 0; i < p; ++i) {
                const auto& name = sc.estimates[i].param.name;
                summary["params"][name]["true"] = final_truth[i];
                const double lo = summary["params"][name]["natural_lo95"].get<double>();
                const double hi = summary["params"][name]["natural_hi95"].get<double>();
                summary["params"][name]["interval_contains_truth"] =
                    (lo <= final_truth[i] && final_truth[i] <= hi);
            }
        }
    }
    run.summary = std::move(summary);
    return run;
}

// ---------------------------------------------------------------------------
// Plot-ready long-format report
// ---------------------------------------------------------------------------

/// Tidy series (series,variable,time,value) for states, parameters (natural
/// units), truth, and observations — the tabular content behind the figures.
inline void write_report(const Scenario& sc, const NumericTable& results,
                         const NumericTable* truth, const Dataset* ds,
                         const std::string& path) {
    const ModelDef& def = sc.model();
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << "series,variable,time,value\n";
    auto emit = [&out](const std::string& series, const std::string& var, double t, double v) {
        out << series << ',' << var << ',' << detail::format_double(t) << ','
            << detail::format_double(v) << '\n';
    };

    const int t_col = results.column("time");
    std::vector<std::string> names = def.state_names;
    std::vector<Transform> transforms(names.size(), Transform::Identity);
    for (const auto& est : sc.estimates) {
        names.push_back(est.param.name);
        transforms.push_back(est.param.transform);
    }
    for (std::size_t v = 0; v < names.size(); ++v) {
        const std::string& name = names[v];
        if (!results.has_column("mean_" + name)) {
            throw ConfigError("results file lacks column mean_" + name +
                              " expected for this config");
        }
        const int mean_col = results.column("mean_" + name);
        const int naive_col = results.column("naive_" + name);
        const int lo_col = results.column("lo95_" + name);
        const int hi_col = results.column("hi95_" + name);
        for (const auto& row : results.rows) {
            const double t = row[t_col];
            emit("estimate", name, t, transform_inverse(transforms[v], row[mean_col]));
            emit("naive", name, t, transform_inverse(transforms[v], row[naive_col]));
            emit("lo95", name, t, transform_inverse(transforms[v], row[lo_col]));
            emit("hi95", name, t, transform_inverse(transforms[v], row[hi_col]));
        }
    }

    if (truth) {
        const int tt = truth->column("time");
        for (const auto& name : def.state_names) {
            if (!truth->has_column(name)) continue;
            const int c = truth->column(name);
            for (const auto& row : truth->rows) emit("truth", name, row[tt], row[c]);
        }
        for (const auto& est : sc.estimates) {
            if (!truth->has_column(est.param.name)) continue;
            const int c = truth->column(est.param.name);
            for (const auto& row : truth->rows) emit("truth", est.param.name, row[tt], row[c]);
        }
    }

    if (ds) {
        for (const auto& row : ds->rows) {
            emit(row.censored ? "observation_censored" : "observation", row.channel, row.time,
                 row.value);
        }
    }
}

}  // namespace cekf
