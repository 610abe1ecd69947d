// Fixed-step RK4 integration of the coupled filter ODEs. A FlowState bundles
// whichever pieces a caller propagates together along the same mean path:
//
//   x'  = f(t, x)
//   P'  = P F^T + F P + Q        (covariance prediction)
//   D'  = D F^T                  (censored-history cross-covariance)
//
// F is re-evaluated from the current x at every RK4 stage. Intervals are
// split at the model's drift breakpoints so no step straddles a kink.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cekf/types.hpp"

namespace cekf {

struct FlowState {
    Vector x;  // always present
    Matrix P;  // n x n, or empty when not propagated
    Matrix D;  // c x n, or empty when not propagated
};

namespace detail {

inline FlowState flow_deriv(const DynamicsModel& model, double t, const FlowState& s) {
    FlowState d;
    d.x = model.drift(t, s.x);
    if (s.P.size() > 0 || s.D.size() > 0) {
        const Matrix f_jac = model.jacobian(t, s.x);
        if (s.P.size() > 0) d.P = s.P * f_jac.transpose() + f_jac * s.P + model.process_noise;
        if (s.D.size() > 0) d.D = s.D * f_jac.transpose();
    }
    return d;
}

inline FlowState add_scaled(const FlowState& s, const FlowState& d, double h) {
    FlowState out;
    out.x = s.x + h * d.x;
    if (s.P.size() > 0) out.P = s.P + h * d.P;
    if (s.D.size() > 0) out.D = s.D + h * d.D;
    return out;
}

inline void rk4_step(const DynamicsModel& model, double t, double h, FlowState& s) {
    const FlowState k1 = flow_deriv(model, t, s);
    const FlowState k2 = flow_deriv(model, t + 0.5 * h, add_scaled(s, k1, 0.5 * h));
    const FlowState k3 = flow_deriv(model, t + 0.5 * h, add_scaled(s, k2, 0.5 * h));
    const FlowState k4 = flow_deriv(model, t + h, add_scaled(s, k3, h));
    const double w = h / 6.0;
    s.x += w * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
    if (s.P.size() > 0) s.P += w * (k1.P + 2.0 * k2.P + 2.0 * k3.P + k4.P);
    if (s.D.size() > 0) s.D += w * (k1.D + 2.0 * k2.D + 2.0 * k3.D + k4.D);
}

inline bool flow_finite(const FlowState& s) {
    if (!s.x.allFinite()) return false;
    if (s.P.size() > 0 && !s.P.allFinite()) return false;
    if (s.D.size() > 0 && !s.D.allFinite()) return false;
    return true;
}

/// Interval endpoints after inserting interior breakpoints.
inline std::vector<double> segment_bounds(double t0, double t1, const std::vector<double>& bps) {
    std::vector<double> bounds{t0};
    for (double b : bps) {
        if (b > t0 && b < t1) bounds.push_back(b);
    }
    std::sort(bounds.begin(), bounds.end());
    bounds.push_back(t1);
    return bounds;
}

}  // namespace detail

/// Integrate the flow state from t0 to t1 with `integ.substeps_per_interval`
/// RK4 steps distributed across breakpoint-aligned segments.
inline void integrate_flow(const DynamicsModel& model, double t0, double t1,
                           const IntegratorSettings& integ, FlowState& s) {
    require(t1 >= t0, "integrate_flow: target time precedes start time");
    require(integ.substeps_per_interval >= 1, "integrate_flow: substeps must be >= 1");
    if (t1 == t0) return;

    const std::vector<double> bounds = detail::segment_bounds(t0, t1, model.breakpoints);
    const double total = t1 - t0;
    for (std::size_t seg = 0; seg + 1 < bounds.size(); ++seg) {
        const double a = bounds[seg], b = bounds[seg + 1];
        const int steps = std::max<int>(
            1, static_cast<int>(std::llround(integ.substeps_per_interval * (b - a) / total)));
        const double h = (b - a) / steps;
        for (int i = 0; i < steps; ++i) {
            const double t = a + i * h;
            detail::rk4_step(model, t, h, s);
            if (!detail::flow_finite(s)) throw IntegrationDivergedError(t + h, "rk4 step");
        }
    }
}

}  // namespace cekf
