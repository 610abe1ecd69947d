// Core value types shared by the filter: Gaussian beliefs, dynamics and
// observation models, integrator settings, and the error hierarchy.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cekf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for runtime failures inside a filter run.
class FilterError : public std::runtime_error {
public:
    explicit FilterError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values appeared while integrating the ODE system.
class IntegrationDivergedError : public FilterError {
public:
    IntegrationDivergedError(double t, const std::string& what_failed)
        : FilterError("integration diverged at t=" + std::to_string(t) + " (" + what_failed + ")"),
          time(t) {}
    double time;
};

/// Innovation (or censored-observation) covariance too ill-conditioned to solve.
class SingularInnovationError : public FilterError {
public:
    explicit SingularInnovationError(const std::string& msg) : FilterError(msg) {}
};

/// A matrix argument contained NaN/Inf entries.
class InvalidMatrixError : public FilterError {
public:
    explicit InvalidMatrixError(const std::string& msg) : FilterError(msg) {}
};

/// Covariance input was not symmetric positive semidefinite.
class InvalidCovarianceError : public FilterError {
public:
    explicit InvalidCovarianceError(const std::string& msg) : FilterError(msg) {}
};

/// The truncation rectangle carries (numerically) no probability mass.
class VanishingMassError : public FilterError {
public:
    VanishingMassError(double mass_estimate, double threshold)
        : FilterError("truncation region mass " + std::to_string(mass_estimate) +
                      " below threshold " + std::to_string(threshold)),
          mass(mass_estimate) {}
    double mass;
};

/// Censored-history covariance singular beyond repair.
class DegenerateHistoryError : public FilterError {
public:
    explicit DegenerateHistoryError(const std::string& msg) : FilterError(msg) {}
};

/// Dimension mismatch between blocks that must agree.
class StructuralError : public FilterError {
public:
    explicit StructuralError(const std::string& msg) : FilterError(msg) {}
};

/// Configuration / input-file validation failure (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File parse failure with location information.
class ParseError : public ConfigError {
public:
    ParseError(const std::string& file, long line, const std::string& msg)
        : ConfigError(file + ":" + std::to_string(line) + ": " + msg) {}
};

// ---------------------------------------------------------------------------
// Core value types
// ---------------------------------------------------------------------------

/// State estimate at a time point: mean and covariance of a Gaussian.
struct GaussianBelief {
    double time = 0.0;
    Vector mean;
    Matrix cov;

    int dim() const { return static_cast<int>(mean.size()); }
};

/// Continuous-time dynamics: drift f(t,x), its Jacobian F = df/dx, and the
/// process-noise intensity Q. `breakpoints` lists times where the drift is
/// not smooth (e.g. end of treatment); integration steps never straddle them.
struct DynamicsModel {
    int state_dim = 0;
    std::function<Vector(double, const Vector&)> drift;
    std::function<Matrix(double, const Vector&)> jacobian;
    Matrix process_noise;
    std::vector<double> breakpoints;
};

/// Discrete observation z = h(x) + v with v ~ N(0, R).
struct ObservationModel {
    int obs_dim = 0;
    std::function<Vector(const Vector&)> map;
    std::function<Matrix(const Vector&)> jacobian;
    Matrix noise;
};

/// Fixed-step classical RK4; `substeps_per_interval` steps per predict call.
struct IntegratorSettings {
    int substeps_per_interval = 20;
};

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw StructuralError(msg);
}

}  // namespace cekf
