// Diagnostic logging controlled by the CENSOR_EKF_LOG environment variable:
// unset/0 = silent, 1 = info, 2 = debug.
#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace cekf {

inline int log_level() {
    static const int level = [] {
        const char* env = std::getenv("CENSOR_EKF_LOG");
        if (!env) return 0;
        return std::atoi(env);
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (log_level() >= 1) std::fprintf(stderr, "[cekf] %s\n", msg.c_str());
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::fprintf(stderr, "[cekf:debug] %s\n", msg.c_str());
}

}  // namespace cekf
