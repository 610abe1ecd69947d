// The benchmark systems: a forced oscillator, the four-state hepatitis C
// model under interferon/ribavirin treatment, and the seven-state HIV model
// with reverse-transcriptase and protease inhibitor treatment. The viral
// models work in log10-transformed state coordinates throughout; the drift
// is mapped through dxt_j/dt = (dx_j/dt) / (ln(10) x_j) with x_j = 10^xt_j,
// which keeps the physical states positive by construction.
//
// Also here: the dual-estimation augmentation that appends transformed
// parameters to the state vector under persistent dynamics (q' = 0).
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cekf/censored.hpp"
#include "cekf/transforms.hpp"
#include "cekf/types.hpp"

namespace cekf {

using ParamTable = std::map<std::string, double>;

inline double require_param(const ParamTable& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw ConfigError("missing parameter '" + name + "'");
    return it->second;
}

constexpr double kLn10 = 2.302585092994045684;

/// A parameterized dynamical system plus its observation channels. Drift and
/// Jacobian are expressed in the model's working coordinates (log10 for the
/// viral models).
struct ModelDef {
    std::string id;
    int state_dim = 0;
    std::vector<std::string> state_names;
    std::vector<std::string> channels;
    ParamTable defaults;
    std::function<Vector(double, const Vector&, const ParamTable&)> drift;
    std::function<Matrix(double, const Vector&, const ParamTable&)> jacobian;
    std::function<std::vector<double>(const ParamTable&)> breakpoints;
    // observation restricted to a subset of channels (indices into `channels`)
    std::function<Vector(const Vector&, const std::vector<int>&)> obs_map;
    std::function<Matrix(const Vector&, const std::vector<int>&)> obs_jac;

    int channel_index(const std::string& name) const {
        for (std::size_t i = 0; i < channels.size(); ++i) {
            if (channels[i] == name) return static_cast<int>(i);
        }
        throw ConfigError("model '" + id + "' has no channel '" + name + "'");
    }
};

namespace detail {

// 10^v with a floor that keeps the log-coordinate chain rule (division by x)
// finite when a component underflows toward zero
inline Vector pow10_floored(const Vector& xt) {
    return Eigen::pow(10.0, xt.array()).max(1e-300).matrix();
}

// log10(10^a + 10^b), stable for widely separated magnitudes
inline double log10_sum(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log10(std::pow(10.0, a - m) + std::pow(10.0, b - m));
}

// d/da log10(10^a + 10^b) = 1 / (1 + 10^(b-a))
inline double log10_sum_grad(double a, double b) { return 1.0 / (1.0 + std::pow(10.0, b - a)); }

// Map an original-coordinate drift and Jacobian to log10 coordinates:
// g_i = f_i / (ln10 x_i), dg_i/dxt_j = (x_j J_ij - delta_ij f_i) / x_i.
inline Vector log_drift(const Vector& x, const Vector& f) {
    return (f.array() / (kLn10 * x.array())).matrix();
}

inline Matrix log_jacobian(const Vector& x, const Vector& f, const Matrix& jac) {
    const int n = static_cast<int>(x.size());
    Matrix out(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            out(i, j) = (x[j] * jac(i, j) - (i == j ? f[i] : 0.0)) / x[i];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Oscillator: x1' = alpha x2, x2' = 4 - 4 x1
// ---------------------------------------------------------------------------

struct OscillatorParams {
    double alpha;
    static OscillatorParams from_table(const ParamTable& p) {
        OscillatorParams o{require_param(p, "alpha")};
        if (!std::isfinite(o.alpha)) throw ConfigError("alpha must be finite");
        return o;
    }
};

// ---------------------------------------------------------------------------
// HCV: healthy/infected hepatocytes and infectious/non-infectious virions
// ---------------------------------------------------------------------------

struct HcvParams {
    double s, r, t_max, d, beta, delta, p, c, rho, epsilon, k, t_end;

    static HcvParams from_table(const ParamTable& tb) {
        HcvParams h;
        h.s = require_param(tb, "s");
        h.r = require_param(tb, "r");
        h.t_max = require_param(tb, "T_max");
        h.d = require_param(tb, "d");
        h.beta = require_param(tb, "beta");
        h.delta = require_param(tb, "delta");
        h.p = require_param(tb, "p");
        h.c = require_param(tb, "c");
        h.rho = require_param(tb, "rho");
        h.epsilon = require_param(tb, "epsilon");
        h.k = require_param(tb, "k");
        h.t_end = require_param(tb, "t_end");
        for (double v : {h.s, h.r, h.t_max, h.d, h.beta, h.delta, h.p, h.c, h.k}) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("hcv: rates must be >= 0");
        }
        if (!(h.t_max > 0.0)) throw ConfigError("hcv: T_max must be positive");
        if (!(h.rho >= 0.0 && h.rho <= 1.0) || !(h.epsilon >= 0.0 && h.epsilon <= 1.0)) {
            throw ConfigError("hcv: rho and epsilon must lie in [0, 1]");
        }
        return h;
    }

    // treatment efficacies decay exponentially after the end of treatment
    void efficacies(double t, double* rho_bar, double* eps_bar) const {
        const double decay = std::exp(-k * std::max(t - t_end, 0.0));
        *rho_bar = rho * decay;
        *eps_bar = epsilon * decay;
    }

    Vector raw_drift(double t, const Vector& x) const {
        double rb, eb;
        efficacies(t, &rb, &eb);
        const double T = x[0], I = x[1], VI = x[2], VNI = x[3];
        const double crowd = 1.0 - (T + I) / t_max;
        Vector f(4);
        f[0] = s + r * T * crowd - d * T - beta * VI * T;
        f[1] = beta * VI * T + r * I * crowd - delta * I;
        f[2] = (1.0 - rb) * (1.0 - eb) * p * I - c * VI;
        f[3] = rb * (1.0 - eb) * p * I - c * VNI;
        return f;
    }

    Matrix raw_jacobian(double t, const Vector& x) const {
        double rb, eb;
        efficacies(t, &rb, &eb);
        const double T = x[0], I = x[1], VI = x[2];
        const double crowd = 1.0 - (T + I) / t_max;
        Matrix j = Matrix::Zero(4, 4);
        j(0, 0) = r * crowd - r * T / t_max - d - beta * VI;
        j(0, 1) = -r * T / t_max;
        j(0, 2) = -beta * T;
        j(1, 0) = beta * VI - r * I / t_max;
        j(1, 1) = r * crowd - r * I / t_max - delta;
        j(1, 2) = beta * T;
        j(2, 1) = (1.0 - rb) * (1.0 - eb) * p;
        j(2, 2) = -c;
        j(3, 1) = rb * (1.0 - eb) * p;
        j(3, 3) = -c;
        return j;
    }
};

// ---------------------------------------------------------------------------
// HIV: two target-cell populations, infected counterparts, infectious and
// non-infectious virus, immune effectors
// ---------------------------------------------------------------------------

struct HivParams {
    double lambda1, lambda2, d1, d2, k1, k2, m1, m2, rho1, rho2, delta, c, f, n_t;
    double lambda_e, delta_e, b_e, d_e, k_b, k_d, epsilon1, epsilon2;
    double treat_start, treat_end;

    static HivParams from_table(const ParamTable& tb) {
        HivParams h;
        h.lambda1 = require_param(tb, "lambda1");
        h.lambda2 = require_param(tb, "lambda2");
        h.d1 = require_param(tb, "d1");
        h.d2 = require_param(tb, "d2");
        h.k1 = require_param(tb, "k1");
        h.k2 = require_param(tb, "k2");
        h.m1 = require_param(tb, "m1");
        h.m2 = require_param(tb, "m2");
        h.rho1 = require_param(tb, "rho1");
        h.rho2 = require_param(tb, "rho2");
        h.delta = require_param(tb, "delta");
        h.c = require_param(tb, "c");
        h.f = require_param(tb, "f");
        h.n_t = require_param(tb, "N_T");
        h.lambda_e = require_param(tb, "lambdaE");
        h.delta_e = require_param(tb, "deltaE");
        h.b_e = require_param(tb, "bE");
        h.d_e = require_param(tb, "dE");
        h.k_b = require_param(tb, "Kb");
        h.k_d = require_param(tb, "Kd");
        h.epsilon1 = require_param(tb, "epsilon1");
        h.epsilon2 = require_param(tb, "epsilon2");
        h.treat_start = require_param(tb, "treat_start");
        h.treat_end = require_param(tb, "treat_end");
        for (double v : {h.lambda1, h.lambda2, h.d1, h.d2, h.k1, h.k2, h.m1, h.m2, h.delta, h.c,
                         h.n_t, h.lambda_e, h.delta_e, h.b_e, h.d_e}) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("hiv: rates must be >= 0");
        }
        if (!(h.k_b > 0.0 && h.k_d > 0.0)) throw ConfigError("hiv: Kb, Kd must be positive");
        for (double v : {h.f, h.epsilon1, h.epsilon2}) {
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("hiv: f, epsilon1, epsilon2 in [0,1]");
        }
        return h;
    }

    double u(double t) const { return (t >= treat_start && t < treat_end) ? 1.0 : 0.0; }

    Vector raw_drift(double t, const Vector& x) const {
        const double ut = u(t);
        const double e1 = epsilon1 * ut, e2 = epsilon2 * ut;
        const double t1 = x[0], t2 = x[1], t1s = x[2], t2s = x[3], vi = x[4], vni = x[5],
                     e = x[6];
        const double s = t1s + t2s;
        Vector f7(7);
        f7[0] = lambda1 - d1 * t1 - (1.0 - e1) * k1 * vi * t1;
        f7[1] = lambda2 - d2 * t2 - (1.0 - f * e1) * k2 * vi * t2;
        f7[2] = (1.0 - e1) * k1 * vi * t1 - delta * t1s - m1 * t1s * e;
        f7[3] = (1.0 - f * e1) * k2 * vi * t2 - delta * t2s - m2 * t2s * e;
        f7[4] = (1.0 - e2) * n_t * delta * s -
                (c + (1.0 - e1) * rho1 * k1 * t1 + (1.0 - f * e1) * rho2 * k2 * t2) * vi;
        f7[5] = e2 * n_t * delta * s - c * vni;
        f7[6] = lambda_e + b_e * s / (s + k_b) * e - d_e * s / (s + k_d) * e - delta_e * e;
        return f7;
    }

    Matrix raw_jacobian(double t, const Vector& x) const {
        const double ut = u(t);
        const double e1 = epsilon1 * ut, e2 = epsilon2 * ut;
        const double t1 = x[0], t2 = x[1], t1s = x[2], t2s = x[3], vi = x[4], e = x[6];
        const double s = t1s + t2s;
        Matrix j = Matrix::Zero(7, 7);
        j(0, 0) = -d1 - (1.0 - e1) * k1 * vi;
        j(0, 4) = -(1.0 - e1) * k1 * t1;
        j(1, 1) = -d2 - (1.0 - f * e1) * k2 * vi;
        j(1, 4) = -(1.0 - f * e1) * k2 * t2;
        j(2, 0) = (1.0 - e1) * k1 * vi;
        j(2, 2) = -delta - m1 * e;
        j(2, 4) = (1.0 - e1) * k1 * t1;
        j(2, 6) = -m1 * t1s;
        j(3, 1) = (1.0 - f * e1) * k2 * vi;
        j(3, 3) = -delta - m2 * e;
        j(3, 4) = (1.0 - f * e1) * k2 * t2;
        j(3, 6) = -m2 * t2s;
        j(4, 0) = -(1.0 - e1) * rho1 * k1 * vi;
        j(4, 1) = -(1.0 - f * e1) * rho2 * k2 * vi;
        j(4, 2) = (1.0 - e2) * n_t * delta;
        j(4, 3) = (1.0 - e2) * n_t * delta;
        j(4, 4) = -(c + (1.0 - e1) * rho1 * k1 * t1 + (1.0 - f * e1) * rho2 * k2 * t2);
        j(5, 2) = e2 * n_t * delta;
        j(5, 3) = e2 * n_t * delta;
        j(5, 5) = -c;
        const double db = b_e * e * k_b / ((s + k_b) * (s + k_b));
        const double dd = d_e * e * k_d / ((s + k_d) * (s + k_d));
        j(6, 2) = db - dd;
        j(6, 3) = db - dd;
        j(6, 6) = b_e * s / (s + k_b) - d_e * s / (s + k_d) - delta_e;
        return j;
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Model registry
// ---------------------------------------------------------------------------

inline const ModelDef& oscillator_model_def() {
    static const ModelDef def = [] {
        ModelDef m;
        m.id = "oscillator";
        m.state_dim = 2;
        m.state_names = {"x1", "x2"};
        m.channels = {"x1"};
        m.defaults = {{"alpha", 1.0}};
        m.drift = [](double, const Vector& x, const ParamTable& tb) {
            const auto p = detail::OscillatorParams::from_table(tb);
            Vector f(2);
            f << p.alpha * x[1], 4.0 - 4.0 * x[0];
            return f;
        };
        m.jacobian = [](double, const Vector&, const ParamTable& tb) {
            const auto p = detail::OscillatorParams::from_table(tb);
            Matrix j(2, 2);
            j << 0.0, p.alpha, -4.0, 0.0;
            return j;
        };
        m.breakpoints = [](const ParamTable&) { return std::vector<double>{}; };
        m.obs_map = [](const Vector& x, const std::vector<int>& ch) {
            Vector z(ch.size());
            for (std::size_t i = 0; i < ch.size(); ++i) {
                require(ch[i] == 0, "oscillator: unknown channel");
                z[static_cast<int>(i)] = x[0];
            }
            return z;
        };
        m.obs_jac = [](const Vector& x, const std::vector<int>& ch) {
            Matrix h = Matrix::Zero(ch.size(), 2);
            for (std::size_t i = 0; i < ch.size(); ++i) h(static_cast<int>(i), 0) = 1.0;
            return h;
        };
        return m;
    }();
    return def;
}

inline const ModelDef& hcv_model_def() {
    static const ModelDef def = [] {
        ModelDef m;
        m.id = "hcv";
        m.state_dim = 4;
        m.state_names = {"T", "I", "VI", "VNI"};  // log10 units
        m.channels = {"viral_load"};
        m.defaults = {
            {"beta", 8.7e-9},  {"p", 25.1},      {"r", 5.620e-3}, {"rho", 0.5},
            {"k", 0.0238},     {"s", 6.17e4},    {"T_max", 1.85e7}, {"d", 0.003},
            {"delta", 0.14},   {"c", 6.0},       {"epsilon", 0.9},  {"t_end", 98.0},
        };
        m.drift = [](double t, const Vector& xt, const ParamTable& tb) {
            const auto p = detail::HcvParams::from_table(tb);
            const Vector x = detail::pow10_floored(xt);
            return detail::log_drift(x, p.raw_drift(t, x));
        };
        m.jacobian = [](double t, const Vector& xt, const ParamTable& tb) {
            const auto p = detail::HcvParams::from_table(tb);
            const Vector x = detail::pow10_floored(xt);
            return detail::log_jacobian(x, p.raw_drift(t, x), p.raw_jacobian(t, x));
        };
        m.breakpoints = [](const ParamTable& tb) {
            return std::vector<double>{require_param(tb, "t_end")};
        };
        m.obs_map = [](const Vector& xt, const std::vector<int>& ch) {
            Vector z(ch.size());
            for (std::size_t i = 0; i < ch.size(); ++i) {
                require(ch[i] == 0, "hcv: unknown channel");
                z[static_cast<int>(i)] = detail::log10_sum(xt[2], xt[3]);
            }
            return z;
        };
        m.obs_jac = [](const Vector& xt, const std::vector<int>& ch) {
            Matrix h = Matrix::Zero(ch.size(), 4);
            for (std::size_t i = 0; i < ch.size(); ++i) {
                h(static_cast<int>(i), 2) = detail::log10_sum_grad(xt[2], xt[3]);
                h(static_cast<int>(i), 3) = detail::log10_sum_grad(xt[3], xt[2]);
            }
            return h;
        };
        return m;
    }();
    return def;
}

inline const ModelDef& hiv_model_def() {
    static const ModelDef def = [] {
        ModelDef m;
        m.id = "hiv";
        m.state_dim = 7;
        m.state_names = {"T1", "T2", "T1s", "T2s", "VI", "VNI", "E"};  // log10 units
        m.channels = {"cd4", "viral_load"};
        m.defaults = {
            {"lambda1", 4.4111},     {"lambda2", 0.0342},   {"d1", 9.91029e-3},
            {"d2", 2.6601e-3},       {"m1", 2.8674e-6},     {"m2", 2.9136e-6},
            {"rho1", 0.99052},       {"rho2", 0.99622},     {"delta", 0.0952},
            {"c", 11.4004},          {"f", 0.0980},         {"N_T", 102.5980},
            {"lambdaE", 9.4159e-4},  {"deltaE", 0.1201},    {"bE", 0.0826},
            {"dE", 0.0939},          {"Kb", 0.1082},        {"Kd", 0.1009},
            {"epsilon1", 0.5140},    {"epsilon2", 0.5770},  {"k1", 7.0e-4},
            {"k2", 1.0e-2},          {"treat_start", 0.0},  {"treat_end", kInf},
        };
        m.drift = [](double t, const Vector& xt, const ParamTable& tb) {
            const auto p = detail::HivParams::from_table(tb);
            const Vector x = detail::pow10_floored(xt);
            return detail::log_drift(x, p.raw_drift(t, x));
        };
        m.jacobian = [](double t, const Vector& xt, const ParamTable& tb) {
            const auto p = detail::HivParams::from_table(tb);
            const Vector x = detail::pow10_floored(xt);
            return detail::log_jacobian(x, p.raw_drift(t, x), p.raw_jacobian(t, x));
        };
        m.breakpoints = [](const ParamTable& tb) {
            std::vector<double> bp;
            for (const char* key : {"treat_start", "treat_end"}) {
                const double v = require_param(tb, key);
                if (std::isfinite(v)) bp.push_back(v);
            }
            return bp;
        };
        m.obs_map = [](const Vector& xt, const std::vector<int>& ch) {
            Vector z(ch.size());
            for (std::size_t i = 0; i < ch.size(); ++i) {
                if (ch[i] == 0) {
                    z[static_cast<int>(i)] = detail::log10_sum(xt[0], xt[2]);  // T1 + T1*
                } else if (ch[i] == 1) {
                    z[static_cast<int>(i)] = detail::log10_sum(xt[4], xt[5]);  // VI + VNI
                } else {
                    throw StructuralError("hiv: unknown channel index");
                }
            }
            return z;
        };
        m.obs_jac = [](const Vector& xt, const std::vector<int>& ch) {
            Matrix h = Matrix::Zero(ch.size(), 7);
            for (std::size_t i = 0; i < ch.size(); ++i) {
                const int row = static_cast<int>(i);
                if (ch[i] == 0) {
                    h(row, 0) = detail::log10_sum_grad(xt[0], xt[2]);
                    h(row, 2) = detail::log10_sum_grad(xt[2], xt[0]);
                } else {
                    h(row, 4) = detail::log10_sum_grad(xt[4], xt[5]);
                    h(row, 5) = detail::log10_sum_grad(xt[5], xt[4]);
                }
            }
            return h;
        };
        return m;
    }();
    return def;
}

inline const ModelDef& get_model(const std::string& id) {
    if (id == "oscillator") return oscillator_model_def();
    if (id == "hcv") return hcv_model_def();
    if (id == "hiv") return hiv_model_def();
    throw ConfigError("unknown model '" + id + "' (expected oscillator|hcv|hiv)");
}

/// Bind a model definition to a fixed parameter table and process noise.
inline DynamicsModel make_dynamics(const ModelDef& def, const ParamTable& params,
                                   const Matrix& process_noise) {
    DynamicsModel m;
    m.state_dim = def.state_dim;
    m.drift = [&def, params](double t, const Vector& x) { return def.drift(t, x, params); };
    m.jacobian = [&def, params](double t, const Vector& x) { return def.jacobian(t, x, params); };
    m.process_noise =
        process_noise.size() ? process_noise : Matrix::Zero(def.state_dim, def.state_dim);
    m.breakpoints = def.breakpoints(params);
    return m;
}

/// Observation model over a channel subset with the given noise covariance.
inline ObservationModel make_observation(const ModelDef& def, const std::vector<int>& channels,
                                         const Matrix& noise) {
    ObservationModel o;
    o.obs_dim = static_cast<int>(channels.size());
    o.map = [&def, channels](const Vector& x) { return def.obs_map(x, channels); };
    o.jacobian = [&def, channels](const Vector& x) { return def.obs_jac(x, channels); };
    o.noise = noise;
    return o;
}

// ---------------------------------------------------------------------------
// Dual estimation
// ---------------------------------------------------------------------------

/// A parameter to estimate alongside the state, in transformed coordinates.
struct EstimatedParam {
    std::string name;
    Transform transform = Transform::Identity;
    double process_noise = 1e-6;  // variance rate in transformed units
};

/// Augmented system (x, q~) with q~' = 0. Parameter columns of the drift
/// Jacobian come from central finite differences in the transformed
/// coordinates; the state block stays analytic.
struct DualModel {
    DynamicsModel dynamics;
    int base_dim = 0;
    std::vector<EstimatedParam> params;
    std::vector<std::string> state_names;  // base names + parameter names

    int dim() const { return base_dim + static_cast<int>(params.size()); }

    /// Parameter values (natural units) encoded in an augmented state vector.
    double natural_value(const Vector& aug_state, int param_index) const {
        return transform_inverse(params[param_index].transform,
                                 aug_state[base_dim + param_index]);
    }
};

inline DualModel augment_for_dual_estimation(const ModelDef& def, const ParamTable& base_params,
                                             const std::vector<EstimatedParam>& estimates,
                                             const Matrix& base_process_noise) {
    for (const auto& est : estimates) {
        if (base_params.find(est.name) == base_params.end()) {
            throw ConfigError("augment_for_dual_estimation: unknown parameter '" + est.name + "'");
        }
    }

    const int n = def.state_dim;
    const int p = static_cast<int>(estimates.size());

    auto table_at = [&def, base_params, estimates](const Vector& q) {
        ParamTable tb = base_params;
        for (std::size_t j = 0; j < estimates.size(); ++j) {
            tb[estimates[j].name] =
                transform_inverse(estimates[j].transform, q[static_cast<int>(j)]);
        }
        return tb;
    };

    DualModel dual;
    dual.base_dim = n;
    dual.params = estimates;
    dual.state_names = def.state_names;
    for (const auto& est : estimates) dual.state_names.push_back(est.name);

    DynamicsModel& m = dual.dynamics;
    m.state_dim = n + p;
    m.drift = [&def, table_at, n, p](double t, const Vector& xa) {
        const ParamTable tb = table_at(xa.tail(p));
        Vector f = Vector::Zero(n + p);
        f.head(n) = def.drift(t, xa.head(n), tb);
        return f;
    };
    m.jacobian = [&def, table_at, n, p](double t, const Vector& xa) {
        const Vector x = xa.head(n);
        const Vector q = xa.tail(p);
        Matrix j = Matrix::Zero(n + p, n + p);
        j.topLeftCorner(n, n) = def.jacobian(t, x, table_at(q));
        for (int jcol = 0; jcol < p; ++jcol) {
            const double h = 1e-6 * std::max(std::abs(q[jcol]), 1.0);
            Vector qp = q, qm = q;
            qp[jcol] += h;
            qm[jcol] -= h;
            j.block(0, n + jcol, n, 1) =
                (def.drift(t, x, table_at(qp)) - def.drift(t, x, table_at(qm))) / (2.0 * h);
        }
        return j;
    };
    Matrix q_aug = Matrix::Zero(n + p, n + p);
    q_aug.topLeftCorner(n, n) =
        base_process_noise.size() ? base_process_noise : Matrix::Zero(n, n);
    for (int jcol = 0; jcol < p; ++jcol) {
        q_aug(n + jcol, n + jcol) = estimates[jcol].process_noise;
    }
    m.process_noise = q_aug;
    m.breakpoints = def.breakpoints(base_params);
    return dual;
}

/// Zero-pad an observation model so it acts on the augmented state.
inline ObservationModel augment_observation(const ObservationModel& obs, int base_dim,
                                            int n_params) {
    ObservationModel out;
    out.obs_dim = obs.obs_dim;
    out.map = [obs, base_dim](const Vector& xa) { return obs.map(xa.head(base_dim)); };
    out.jacobian = [obs, base_dim, n_params](const Vector& xa) {
        const Matrix h = obs.jacobian(xa.head(base_dim));
        Matrix out_h = Matrix::Zero(h.rows(), base_dim + n_params);
        out_h.leftCols(base_dim) = h;
        return out_h;
    };
    out.noise = obs.noise;
    return out;
}

}  // namespace cekf
