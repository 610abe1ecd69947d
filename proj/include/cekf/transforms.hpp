// Coordinate transforms for estimated quantities: log10 for positive scale
// parameters and states, and the tangent map for parameters constrained to
// (0, 1). The tangent map sends q to tan(pi q - pi/2), a bijection from
// (0, 1) onto the real line.
#pragma once

#include <cmath>
#include <string>

#include "cekf/types.hpp"

namespace cekf {

enum class Transform { Identity, Log10, Tan };

inline double transform_forward(Transform t, double v) {
    switch (t) {
        case Transform::Identity: return v;
        case Transform::Log10: return std::log10(v);
        case Transform::Tan: return std::tan(M_PI * v - M_PI / 2.0);
    }
    return v;
}

inline double transform_inverse(Transform t, double v) {
    switch (t) {
        case Transform::Identity: return v;
        case Transform::Log10: return std::pow(10.0, v);
        case Transform::Tan: return (std::atan(v) + M_PI / 2.0) / M_PI;
    }
    return v;
}

inline const char* transform_name(Transform t) {
    switch (t) {
        case Transform::Identity: return "identity";
        case Transform::Log10: return "log10";
        case Transform::Tan: return "tan";
    }
    return "identity";
}

inline Transform parse_transform(const std::string& name) {
    if (name == "identity") return Transform::Identity;
    if (name == "log10") return Transform::Log10;
    if (name == "tan") return Transform::Tan;
    throw ConfigError("unknown transform '" + name + "' (expected identity|log10|tan)");
}

}  // namespace cekf
