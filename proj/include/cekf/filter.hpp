// Extended Kalman filter core: ODE prediction of the Gaussian belief and the
// standard uncensored measurement update. Innovation systems are solved by
// Cholesky factorization; no explicit matrix inversion anywhere.
#pragma once

#include "cekf/integrate.hpp"
#include "cekf/linalg.hpp"
#include "cekf/types.hpp"

namespace cekf {

/// Propagate the belief to t_target by jointly integrating the mean ODE and
/// the covariance equation P' = P F^T + F P + Q.
inline GaussianBelief predict(const GaussianBelief& belief, const DynamicsModel& model,
                              double t_target, const IntegratorSettings& integ) {
    check_belief(belief, "predict");
    require(model.state_dim == belief.dim(), "predict: model/belief dimension mismatch");
    require(t_target >= belief.time, "predict: t_target precedes belief time");

    FlowState s{belief.mean, belief.cov, Matrix()};
    integrate_flow(model, belief.time, t_target, integ, s);
    return GaussianBelief{t_target, s.x, repair_covariance(s.P)};
}

/// Everything the update produced, for callers that need the intermediates
/// (the censored-history update reuses H, K, S and the innovation).
struct UpdateDetail {
    GaussianBelief posterior;
    Matrix jacobian;       // H at the prior mean
    Matrix gain;           // K
    Matrix innovation_cov; // S = H P- H^T + R
    Vector innovation;     // z - h(x-)
};

inline UpdateDetail update_uncensored_detail(const GaussianBelief& prior,
                                             const ObservationModel& obs, const Vector& z) {
    check_belief(prior, "update_uncensored");
    require(static_cast<int>(z.size()) == obs.obs_dim, "update_uncensored: z dimension mismatch");

    const Matrix h_jac = obs.jacobian(prior.mean);
    require(h_jac.rows() == obs.obs_dim && h_jac.cols() == prior.dim(),
            "update_uncensored: jacobian shape mismatch");

    const Matrix s_cov = symmetrized(h_jac * prior.cov * h_jac.transpose() + obs.noise);
    // K = P- H^T S^{-1}, via S K^T = H P-
    const Matrix gain = solve_spd(s_cov, h_jac * prior.cov, "innovation").transpose();
    const Vector innovation = z - obs.map(prior.mean);

    GaussianBelief posterior;
    posterior.time = prior.time;
    posterior.mean = prior.mean + gain * innovation;
    posterior.cov = repair_covariance(
        (Matrix::Identity(prior.dim(), prior.dim()) - gain * h_jac) * prior.cov);
    return UpdateDetail{std::move(posterior), h_jac, gain, s_cov, innovation};
}

inline GaussianBelief update_uncensored(const GaussianBelief& prior, const ObservationModel& obs,
                                        const Vector& z) {
    return update_uncensored_detail(prior, obs, z).posterior;
}

}  // namespace cekf
