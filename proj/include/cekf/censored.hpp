// The censored-observation machinery layered on the EKF core.
//
// The filter threads a *naive* belief that ignores censored observations
// (their Kalman gain is zero) together with a history of those censored
// observations: their naive mean, covariance, and cross-covariance with the
// current state, all conditional on the uncensored data only. At every step
// the emitted estimate additionally conditions on the censored observations
// lying inside their censoring rectangle, via truncated-Gaussian moments and
// the gain K' = P_xC (P_C)^{-1}:
//
//   x  = x_uc + K' (C_trunc - C_uc)
//   P  = P_uc - K' (P_C_uc - P_C_trunc) K'^T
//
// Between steps the cross-covariance block evolves by D' = D F^T along the
// naive mean path. Old entries whose coupling to the state has decayed are
// pruned to bound the cost.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cekf/filter.hpp"
#include "cekf/truncated.hpp"

namespace cekf {

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// One channel's measurement within a frame. When censored, `value` holds the
/// reported detection limit and [censor_lo, censor_hi] the interval the true
/// value is known to lie in.
struct ChannelObservation {
    int channel = 0;
    double value = 0.0;
    bool censored = false;
    double censor_lo = -kInf;
    double censor_hi = kInf;
};

/// All observations arriving at one time point.
struct ObservationFrame {
    double time = 0.0;
    std::vector<ChannelObservation> channels;
};

/// Stacked naive moments of the retained censored observations, conditional
/// on uncensored data only: mean C_uc, covariance P_C_uc, cross-covariance
/// with the state P_Cx_uc, and the censoring rectangle.
struct CensoredHistory {
    Vector mean_uc;    // c
    Matrix cov_uc;     // c x c
    Matrix cross_uc;   // c x n
    CensorRegion region;
    std::vector<double> entry_times;
    std::vector<int> entry_steps;

    static CensoredHistory empty(int state_dim) {
        CensoredHistory h;
        h.mean_uc = Vector(0);
        h.cov_uc = Matrix(0, 0);
        h.cross_uc = Matrix(0, state_dim);
        h.region = CensorRegion::empty();
        return h;
    }

    int count() const { return static_cast<int>(mean_uc.size()); }

    void check_shapes(int state_dim) const {
        const int c = count();
        require(cov_uc.rows() == c && cov_uc.cols() == c, "CensoredHistory: cov_uc shape");
        require(cross_uc.rows() == c && cross_uc.cols() == state_dim,
                "CensoredHistory: cross_uc shape");
        require(region.dim() == c, "CensoredHistory: region dimension");
        require(static_cast<int>(entry_times.size()) == c, "CensoredHistory: entry_times length");
        require(static_cast<int>(entry_steps.size()) == c, "CensoredHistory: entry_steps length");
    }
};

struct PruningPolicy {
    double epsilon = 1e-4;  // normalized cross-covariance row-norm threshold
    int max_age = 50;       // in observation frames
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Observation model restricted to a subset of its rows.
inline ObservationModel restrict_observation(const ObservationModel& obs,
                                             const std::vector<int>& rows) {
    ObservationModel sub;
    sub.obs_dim = static_cast<int>(rows.size());
    sub.map = [obs, rows](const Vector& x) {
        const Vector full = obs.map(x);
        Vector out(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<int>(i)] = full[rows[i]];
        return out;
    };
    sub.jacobian = [obs, rows](const Vector& x) {
        const Matrix full = obs.jacobian(x);
        Matrix out(rows.size(), full.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<int>(i)) = full.row(rows[i]);
        return out;
    };
    sub.noise = Matrix(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows.size(); ++j) {
            sub.noise(static_cast<int>(i), static_cast<int>(j)) = obs.noise(rows[i], rows[j]);
        }
    }
    return sub;
}

struct NaiveStepResult {
    GaussianBelief belief;
    std::vector<int> censored_channels;            // channel ids, frame order
    std::optional<UpdateDetail> update;            // present when any channel uncensored
    std::vector<int> uncensored_rows, censored_rows;
};

/// Modified-gain step: uncensored channels update the belief through the
/// standard Kalman equations restricted to their rows; censored channels get
/// zero gain, so a fully censored frame leaves the belief untouched.
inline NaiveStepResult naive_step(const GaussianBelief& prior,
                                  const std::vector<ChannelObservation>& frame,
                                  const ObservationModel& obs) {
    require(!frame.empty(), "naive_step: empty frame");
    require(static_cast<int>(frame.size()) == obs.obs_dim,
            "naive_step: frame/observation dimension mismatch");

    NaiveStepResult out;
    for (std::size_t i = 0; i < frame.size(); ++i) {
        if (frame[i].censored) {
            out.censored_rows.push_back(static_cast<int>(i));
            out.censored_channels.push_back(frame[i].channel);
        } else {
            out.uncensored_rows.push_back(static_cast<int>(i));
        }
    }

    if (out.uncensored_rows.empty()) {
        out.belief = prior;
        return out;
    }

    const ObservationModel sub = restrict_observation(obs, out.uncensored_rows);
    Vector z(out.uncensored_rows.size());
    for (std::size_t i = 0; i < out.uncensored_rows.size(); ++i) {
        z[static_cast<int>(i)] = frame[out.uncensored_rows[i]].value;
    }
    out.update = update_uncensored_detail(prior, sub, z);
    out.belief = out.update->posterior;
    return out;
}

/// Evolve the censored/state cross-covariance D along the naive mean path:
/// D' = D F^T, x' = f(x), from belief.time to t_target.
inline Matrix propagate_cross_covariance(const Matrix& d, const DynamicsModel& model,
                                         const GaussianBelief& belief, double t_target,
                                         const IntegratorSettings& integ) {
    require(d.cols() == model.state_dim, "propagate_cross_covariance: D column count");
    require(t_target >= belief.time, "propagate_cross_covariance: t_target precedes belief");
    if (d.rows() == 0 || t_target == belief.time) return d;

    FlowState s{belief.mean, Matrix(), d};
    integrate_flow(model, belief.time, t_target, integ, s);
    return s.D;
}

/// Append the current step's censored channels to the history. `naive` is the
/// current naive belief (post-update when the frame also carried uncensored
/// channels) and `d_current` the cross-covariance of the existing entries
/// with the state at the current time.
inline CensoredHistory history_extend_censored(const CensoredHistory& hist,
                                               const GaussianBelief& naive,
                                               const ObservationModel& censored_obs,
                                               const std::vector<std::pair<double, double>>& intervals,
                                               const Matrix& d_current, double time, int step) {
    const int c_old = hist.count();
    const int m = censored_obs.obs_dim;
    const int n = naive.dim();
    require(static_cast<int>(intervals.size()) == m, "history_extend_censored: interval count");
    require(d_current.rows() == c_old && d_current.cols() == n,
            "history_extend_censored: propagated cross-covariance shape");
    hist.check_shapes(n);

    const Vector h_new = censored_obs.map(naive.mean);
    const Matrix h_jac = censored_obs.jacobian(naive.mean);
    const Matrix obs_cov = symmetrized(h_jac * naive.cov * h_jac.transpose() + censored_obs.noise);

    CensoredHistory out;
    out.mean_uc.resize(c_old + m);
    out.mean_uc << hist.mean_uc, h_new;

    out.cross_uc.resize(c_old + m, n);
    out.cross_uc << d_current, h_jac * naive.cov;

    out.cov_uc.resize(c_old + m, c_old + m);
    const Matrix coupling = d_current * h_jac.transpose();  // c_old x m
    out.cov_uc.topLeftCorner(c_old, c_old) = hist.cov_uc;
    out.cov_uc.topRightCorner(c_old, m) = coupling;
    out.cov_uc.bottomLeftCorner(m, c_old) = coupling.transpose();
    out.cov_uc.bottomRightCorner(m, m) = obs_cov;

    out.region = hist.region;
    out.entry_times = hist.entry_times;
    out.entry_steps = hist.entry_steps;
    for (const auto& [lo, hi] : intervals) {
        out.region = out.region.appended(lo, hi);
        out.entry_times.push_back(time);
        out.entry_steps.push_back(step);
    }
    out.check_shapes(n);
    return out;
}

/// Condition the history blocks on a new uncensored measurement. `d_minus` is
/// the cross-covariance propagated to the current time (before the update);
/// the remaining ingredients come from the naive Kalman update itself.
inline CensoredHistory history_update_uncensored(const CensoredHistory& hist,
                                                 const Matrix& d_minus,
                                                 const UpdateDetail& upd) {
    const int c = hist.count();
    require(c >= 1, "history_update_uncensored: empty history");
    require(d_minus.rows() == c, "history_update_uncensored: D row count");

    const Matrix b = upd.jacobian * d_minus.transpose();      // m x c, = H (P_Cx-)^T
    const Matrix w = solve_spd(upd.innovation_cov, b, "censored-history innovation");

    CensoredHistory out = hist;
    out.mean_uc = hist.mean_uc + w.transpose() * upd.innovation;
    out.cov_uc = symmetrized(hist.cov_uc - b.transpose() * w);
    out.cross_uc = d_minus - b.transpose() * upd.gain.transpose();
    return out;
}

struct CorrectionResult {
    GaussianBelief belief;
    double kprime_norm = 0.0;      // Frobenius norm of the censored gain
    double estimator_error = 0.0;  // from the truncated-moment computation
    double mass = 1.0;             // estimated probability of the rectangle
};

/// Final per-step estimate: condition the naive belief on the censored
/// observations lying inside the rectangle. With an empty history the naive
/// belief is returned unchanged.
inline CorrectionResult conditioned_correction(const GaussianBelief& naive,
                                               const CensoredHistory& hist,
                                               std::uint64_t rng_seed) {
    if (hist.count() == 0) return CorrectionResult{naive, 0.0, 0.0, 1.0};
    hist.check_shapes(naive.dim());
    if (hist.cov_uc.diagonal().minCoeff() <= 0.0) {
        throw DegenerateHistoryError(
            "conditioned_correction: history covariance has a non-positive diagonal entry");
    }

    const TruncationResult tm =
        truncated_mvn_moments(hist.mean_uc, hist.cov_uc, hist.region, rng_seed);

    // K' = P_xC (P_C)^{-1}, via P_C X = P_Cx and K' = X^T.
    const Matrix kprime =
        solve_spd_jittered(hist.cov_uc, hist.cross_uc, "censored-history").transpose();

    CorrectionResult out;
    out.belief.time = naive.time;
    out.belief.mean = naive.mean + kprime * (tm.mean - hist.mean_uc);
    out.belief.cov =
        repair_covariance(naive.cov - kprime * (hist.cov_uc - tm.cov) * kprime.transpose());
    out.kprime_norm = kprime.norm();
    out.estimator_error = tm.estimator_error;
    out.mass = tm.mass;
    return out;
}

/// Drop history entries whose normalized coupling to the state fell below
/// epsilon or whose age exceeds max_age frames. Entries added at
/// `current_step` are never removed.
inline CensoredHistory prune_history(const CensoredHistory& hist, const PruningPolicy& policy,
                                     double max_diag_p, int current_step) {
    const int c = hist.count();
    if (c == 0) return hist;

    std::vector<int> keep;
    for (int i = 0; i < c; ++i) {
        if (hist.entry_steps[i] == current_step) {
            keep.push_back(i);
            continue;
        }
        if (current_step - hist.entry_steps[i] > policy.max_age) continue;
        const double denom =
            std::sqrt(std::max(hist.cov_uc(i, i) * std::max(max_diag_p, 0.0), 1e-300));
        if (hist.cross_uc.row(i).norm() / denom < policy.epsilon) continue;
        keep.push_back(i);
    }
    if (static_cast<int>(keep.size()) == c) return hist;

    CensoredHistory out;
    const int k = static_cast<int>(keep.size());
    out.mean_uc.resize(k);
    out.cov_uc.resize(k, k);
    out.cross_uc.resize(k, hist.cross_uc.cols());
    for (int i = 0; i < k; ++i) {
        out.mean_uc[i] = hist.mean_uc[keep[i]];
        out.cross_uc.row(i) = hist.cross_uc.row(keep[i]);
        for (int j = 0; j < k; ++j) out.cov_uc(i, j) = hist.cov_uc(keep[i], keep[j]);
        out.entry_times.push_back(hist.entry_times[keep[i]]);
        out.entry_steps.push_back(hist.entry_steps[keep[i]]);
    }
    out.region = hist.region.selected(keep);
    return out;
}

// ---------------------------------------------------------------------------
// Filter loop
// ---------------------------------------------------------------------------

struct FilterConfig {
    IntegratorSettings integrator;
    PruningPolicy pruning;
    std::uint64_t seed = 0;
    bool plain_ekf = false;  // ignore censor flags entirely (baseline / reduction)
};

struct FilterStepRecord {
    int step = 0;
    double time = 0.0;
    GaussianBelief naive;
    GaussianBelief corrected;
    int history_size = 0;          // after pruning
    double kalman_gain_norm = 0.0; // Frobenius norm of the uncensored-update gain
    double kprime_norm = 0.0;      // Frobenius norm of the censored gain
    double trunc_error = 0.0;
    double trunc_mass = 1.0;
    int n_censored = 0;
    int n_uncensored = 0;
};

/// Builds the observation model for the subset of channels present in a
/// frame (ids in frame order).
using ObservationModelFactory = std::function<ObservationModel(const std::vector<int>&)>;

/// One full filtering pass over the dataset. Emits the naive and corrected
/// beliefs plus diagnostics per step; any operation failure is rethrown with
/// the step index and time attached.
inline std::vector<FilterStepRecord> filter_run(const DynamicsModel& model,
                                                const ObservationModelFactory& obs_factory,
                                                const GaussianBelief& initial,
                                                const std::vector<ObservationFrame>& data,
                                                const FilterConfig& config) {
    check_belief(initial, "filter_run initial belief");
    for (std::size_t k = 1; k < data.size(); ++k) {
        if (!(data[k].time > data[k - 1].time)) {
            throw StructuralError("filter_run: observation times not strictly increasing at index " +
                                  std::to_string(k));
        }
    }

    std::vector<FilterStepRecord> records;
    records.reserve(data.size());
    GaussianBelief naive = initial;
    CensoredHistory hist = CensoredHistory::empty(model.state_dim);

    for (std::size_t k = 0; k < data.size(); ++k) {
        const ObservationFrame& frame = data[k];
        const int step = static_cast<int>(k);
        try {
            const GaussianBelief prior = predict(naive, model, frame.time, config.integrator);
            Matrix d_current =
                hist.count() > 0
                    ? propagate_cross_covariance(hist.cross_uc, model, naive, frame.time,
                                                 config.integrator)
                    : Matrix(0, model.state_dim);

            std::vector<int> channel_ids;
            channel_ids.reserve(frame.channels.size());
            for (const auto& ch : frame.channels) channel_ids.push_back(ch.channel);
            const ObservationModel obs = obs_factory(channel_ids);

            std::vector<ChannelObservation> effective = frame.channels;
            if (config.plain_ekf) {
                for (auto& ch : effective) ch.censored = false;
            }

            const NaiveStepResult ns = naive_step(prior, effective, obs);
            naive = ns.belief;

            FilterStepRecord rec;
            rec.step = step;
            rec.time = frame.time;
            rec.n_censored = static_cast<int>(ns.censored_rows.size());
            rec.n_uncensored = static_cast<int>(ns.uncensored_rows.size());

            if (ns.update.has_value()) {
                rec.kalman_gain_norm = ns.update->gain.norm();
                if (hist.count() > 0) {
                    hist = history_update_uncensored(hist, d_current, *ns.update);
                    d_current = hist.cross_uc;
                }
            }

            if (!ns.censored_rows.empty()) {
                const ObservationModel sub = restrict_observation(obs, ns.censored_rows);
                std::vector<std::pair<double, double>> intervals;
                for (int row : ns.censored_rows) {
                    intervals.emplace_back(effective[row].censor_lo, effective[row].censor_hi);
                }
                hist = history_extend_censored(hist, naive, sub, intervals, d_current, frame.time,
                                               step);
            }

            const CorrectionResult corr =
                conditioned_correction(naive, hist, mix_seed(config.seed, k));
            hist = prune_history(hist, config.pruning,
                                 naive.cov.size() ? naive.cov.diagonal().maxCoeff() : 0.0, step);

            rec.naive = naive;
            rec.corrected = corr.belief;
            rec.history_size = hist.count();
            rec.kprime_norm = corr.kprime_norm;
            rec.trunc_error = corr.estimator_error;
            rec.trunc_mass = corr.mass;
            records.push_back(std::move(rec));
        } catch (const FilterError& e) {
            throw FilterError("step " + std::to_string(step) + " at t=" +
                              std::to_string(frame.time) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace cekf
