// Observation datasets and their CSV serialization. Schema (exact header):
//
//   time,channel,value,censored,limit_low,limit_high
//
// Values use up to 17 significant digits so write/read round-trips are
// lossless; infinite limits are spelled `inf` / `-inf`. A censored row's
// [limit_low, limit_high] is the interval the true value is known to lie in,
// and its `value` column repeats the reported detection limit.
#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cekf/censored.hpp"
#include "cekf/types.hpp"

namespace cekf {

struct DatasetRow {
    double time = 0.0;
    std::string channel;
    double value = 0.0;
    bool censored = false;
    double limit_low = -kInf;
    double limit_high = kInf;
};

struct Dataset {
    std::vector<DatasetRow> rows;
};

namespace detail {

inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& file, long line) {
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(file, line, "not a number: '" + s + "'");
    }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace detail

inline void validate_dataset(const Dataset& ds, const std::string& source = "<dataset>") {
    long line = 1;
    double prev_time = -kInf;
    for (const auto& row : ds.rows) {
        ++line;
        if (!(row.time >= prev_time)) {
            throw ParseError(source, line, "times must be nondecreasing");
        }
        prev_time = row.time;
        if (row.censored) {
            if (!std::isfinite(row.limit_low) && !std::isfinite(row.limit_high)) {
                throw ParseError(source, line, "censored row needs a finite limit");
            }
            if (!(row.limit_low < row.limit_high)) {
                throw ParseError(source, line, "censor interval is empty");
            }
            const double reported =
                std::isfinite(row.limit_high) ? row.limit_high : row.limit_low;
            if (row.value != reported) {
                throw ParseError(source, line,
                                 "censored row value must equal the reported detection limit");
            }
        } else if (!std::isfinite(row.value)) {
            throw ParseError(source, line, "uncensored row value must be finite");
        }
    }
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << "time,channel,value,censored,limit_low,limit_high\n";
    for (const auto& row : ds.rows) {
        out << detail::format_double(row.time) << ',' << row.channel << ','
            << detail::format_double(row.value) << ',' << (row.censored ? 1 : 0) << ','
            << detail::format_double(row.limit_low) << ','
            << detail::format_double(row.limit_high) << '\n';
    }
    if (!out) throw ConfigError("write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset: " + path);
    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) throw ParseError(path, 1, "empty file");
    ++lineno;
    if (line != "time,channel,value,censored,limit_low,limit_high") {
        throw ParseError(path, 1, "unexpected header: '" + line + "'");
    }

    Dataset ds;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != 6) {
            throw ParseError(path, lineno, "expected 6 fields, got " +
                                               std::to_string(fields.size()));
        }
        DatasetRow row;
        row.time = detail::parse_double(fields[0], path, lineno);
        row.channel = fields[1];
        row.value = detail::parse_double(fields[2], path, lineno);
        if (fields[3] == "0") {
            row.censored = false;
        } else if (fields[3] == "1") {
            row.censored = true;
        } else {
            throw ParseError(path, lineno, "censored flag must be 0 or 1");
        }
        row.limit_low = detail::parse_double(fields[4], path, lineno);
        row.limit_high = detail::parse_double(fields[5], path, lineno);
        ds.rows.push_back(row);
    }
    validate_dataset(ds, path);
    return ds;
}

/// Group rows into per-time frames, mapping channel names to the model's
/// channel indices via the supplied resolver.
inline std::vector<ObservationFrame> dataset_to_frames(
    const Dataset& ds, const std::function<int(const std::string&)>& channel_index) {
    std::vector<ObservationFrame> frames;
    for (const auto& row : ds.rows) {
        if (frames.empty() || frames.back().time != row.time) {
            frames.push_back(ObservationFrame{row.time, {}});
        }
        ChannelObservation obs;
        obs.channel = channel_index(row.channel);
        obs.value = row.value;
        obs.censored = row.censored;
        obs.censor_lo = row.limit_low;
        obs.censor_hi = row.limit_high;
        frames.back().channels.push_back(obs);
    }
    return frames;
}

}  // namespace cekf
