// Moments of a multivariate normal restricted to an axis-aligned rectangle.
// These drive the conditioned correction: the censored observations are known
// only to lie inside the rectangle, and the correction needs the mean and
// covariance of the naive Gaussian conditioned on that event.
//
// Dimension 1 uses the closed-form truncated-normal formulas. Dimension >= 2
// uses seeded rejection sampling in fixed-size chunks, switching to
// mean-shifted importance sampling when the acceptance rate drops below 1%.
// Chunks are seeded as mix(seed, chunk_index) and merged in index order, so
// results are bit-identical for a fixed seed no matter how many worker
// threads execute them.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include "cekf/linalg.hpp"
#include "cekf/log.hpp"
#include "cekf/rng.hpp"
#include "cekf/types.hpp"

namespace cekf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Axis-aligned rectangle of censoring intervals, one row per censored
/// observation. Entries may be infinite on either side.
struct CensorRegion {
    Vector lower;
    Vector upper;

    int dim() const { return static_cast<int>(lower.size()); }

    static CensorRegion empty() { return CensorRegion{Vector(0), Vector(0)}; }

    static CensorRegion full_space(int c) {
        return CensorRegion{Vector::Constant(c, -kInf), Vector::Constant(c, kInf)};
    }

    void validate() const {
        require(lower.size() == upper.size(), "CensorRegion: bound lengths disagree");
        for (int i = 0; i < dim(); ++i) {
            if (!(lower[i] < upper[i])) {
                throw StructuralError("CensorRegion: lower bound not below upper at row " +
                                      std::to_string(i));
            }
        }
    }

    bool all_infinite() const {
        for (int i = 0; i < dim(); ++i) {
            if (std::isfinite(lower[i]) || std::isfinite(upper[i])) return false;
        }
        return true;
    }

    CensorRegion appended(double lo, double hi) const {
        CensorRegion out;
        out.lower.resize(dim() + 1);
        out.upper.resize(dim() + 1);
        out.lower << lower, lo;
        out.upper << upper, hi;
        return out;
    }

    CensorRegion selected(const std::vector<int>& rows) const {
        CensorRegion out;
        out.lower.resize(rows.size());
        out.upper.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.lower[static_cast<int>(i)] = lower[rows[i]];
            out.upper[static_cast<int>(i)] = upper[rows[i]];
        }
        return out;
    }
};

/// Mean/covariance of the truncated Gaussian plus the Monte-Carlo
/// standard-error bound (0 on the closed-form path) and the estimated
/// probability mass of the rectangle.
struct TruncationResult {
    Vector mean;
    Matrix cov;
    double estimator_error = 0.0;
    double mass = 1.0;
};

inline double norm_pdf(double x) {
    if (!std::isfinite(x)) return 0.0;
    return std::exp(-0.5 * x * x) * 0.3989422804014326779;
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

/// Inverse standard-normal CDF (Acklam's rational approximation, relative
/// error below 1.2e-9, plus one Halley refinement step).
inline double norm_cdf_inv(double p) {
    if (!(p > 0.0)) return -kInf;
    if (!(p < 1.0)) return kInf;
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // one Halley step against the exact erfc-based CDF
    const double e = norm_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

namespace detail {

constexpr double kMassFloor = 1e-12;

struct Trunc1D {
    double mean, var, mass;
};

inline Trunc1D truncated_normal_1d(double mu, double var, double lo, double hi) {
    const double sigma = std::sqrt(var);
    if (sigma == 0.0) {
        const bool inside = mu >= lo && mu <= hi;
        return Trunc1D{mu, 0.0, inside ? 1.0 : 0.0};
    }
    const double a = (lo - mu) / sigma;
    const double b = (hi - mu) / sigma;
    // mass = Phi(b) - Phi(a), with erfc(-inf)=2 and erfc(inf)=0
    const double z = 0.5 * (std::erfc(a * 0.7071067811865475244) -
                            std::erfc(b * 0.7071067811865475244));
    if (!(z > kMassFloor)) return Trunc1D{mu, var, std::max(z, 0.0)};

    const double pa = norm_pdf(a), pb = norm_pdf(b);
    const double apa = std::isfinite(a) ? a * pa : 0.0;
    const double bpb = std::isfinite(b) ? b * pb : 0.0;
    const double ratio = (pa - pb) / z;
    double mean = mu + sigma * ratio;
    double tvar = var * (1.0 + (apa - bpb) / z - ratio * ratio);
    mean = std::clamp(mean, lo, hi);
    tvar = std::clamp(tvar, 0.0, var);
    return Trunc1D{mean, tvar, z};
}

// Weighted sample statistics of one chunk (or a merge of chunks). Merging
// happens strictly in chunk-index order so thread scheduling cannot change
// the floating-point result.
struct MomentAccumulator {
    double proposals = 0.0;
    double wsum = 0.0;
    double w2sum = 0.0;
    Vector wx;
    Matrix wxx;
    Vector w2x;
    Vector w2x2;

    explicit MomentAccumulator(int c)
        : wx(Vector::Zero(c)), wxx(Matrix::Zero(c, c)), w2x(Vector::Zero(c)),
          w2x2(Vector::Zero(c)) {}

    void merge(const MomentAccumulator& o) {
        proposals += o.proposals;
        wsum += o.wsum;
        w2sum += o.w2sum;
        wx += o.wx;
        wxx += o.wxx;
        w2x += o.w2x;
        w2x2 += o.w2x2;
    }

    double ess() const { return w2sum > 0.0 ? wsum * wsum / w2sum : 0.0; }
    double mass() const { return proposals > 0.0 ? wsum / proposals : 0.0; }
};

struct SamplerSpec {
    Vector mu;
    Matrix chol_l;  // lower-triangular factor of sigma
    bool sequential = false;  // false: plain rejection; true: GHK conditioning
};

inline void accumulate_weighted(const Eigen::Ref<const Matrix>& xv,
                                const Eigen::Ref<const Eigen::ArrayXd>& wv, bool unit_weights,
                                MomentAccumulator& acc) {
    acc.wsum = wv.sum();
    acc.wx.noalias() = xv * wv.matrix();
    Matrix xw = xv.array().rowwise() * wv.transpose();
    acc.wxx.noalias() = xw * xv.transpose();
    if (unit_weights) {
        acc.w2sum = acc.wsum;
        acc.w2x = acc.wx;
        acc.w2x2 = acc.wxx.diagonal();
    } else {
        acc.w2sum = wv.square().sum();
        const Vector w2v = wv.square().matrix();
        acc.w2x.noalias() = xv * w2v;
        acc.w2x2.noalias() = (xv.array().square().matrix()) * w2v;
    }
}

// One chunk of proposals. Accepted columns are compacted before the moment
// products so the O(c^2 n) work scales with accepted samples only.
inline MomentAccumulator sample_chunk_reject(const SamplerSpec& spec, const CensorRegion& region,
                                             std::uint64_t seed, std::uint64_t stream, int chunk) {
    const int c = static_cast<int>(spec.mu.size());
    MomentAccumulator acc(c);
    Rng rng(seed, stream);

    Matrix z(c, chunk);
    rng.fill_normal(z.data(), static_cast<std::ptrdiff_t>(c) * chunk);
    Matrix x = (spec.chol_l * z).colwise() + spec.mu;

    Matrix xa(c, chunk);
    int n_acc = 0;
    for (int j = 0; j < chunk; ++j) {
        bool inside = true;
        for (int i = 0; i < c; ++i) {
            const double xi = x(i, j);
            if (!(xi >= region.lower[i] && xi <= region.upper[i])) {
                inside = false;
                break;
            }
        }
        if (inside) xa.col(n_acc++) = x.col(j);
    }

    acc.proposals = chunk;
    if (n_acc == 0) return acc;
    accumulate_weighted(xa.leftCols(n_acc), Eigen::ArrayXd::Ones(n_acc), true, acc);
    return acc;
}

// Sequential-conditioning importance sampler (GHK): every coordinate is drawn
// from its 1-D truncated conditional given the previous ones, so samples land
// inside the rectangle by construction; the weight is the product of the
// conditional interval masses, whose mean estimates the rectangle probability.
// Samples come in antithetic pairs (uniforms u and 1-u), which strongly
// reduces the variance of the mean estimate; standard errors are computed
// over pairs, which are iid.
inline MomentAccumulator sample_chunk_ghk(const SamplerSpec& spec, const CensorRegion& region,
                                          std::uint64_t seed, std::uint64_t stream, int chunk) {
    const int c = static_cast<int>(spec.mu.size());
    MomentAccumulator acc(c);
    Rng rng(seed, stream);
    const int pairs = chunk / 2;
    const int n = 2 * pairs;  // columns j and j+pairs are antithetic partners

    Matrix z(c, n);
    Eigen::ArrayXd w = Eigen::ArrayXd::Ones(n);
    Eigen::RowVectorXd partial(n);
    std::vector<double> uniforms(pairs);

    for (int i = 0; i < c; ++i) {
        if (i > 0) {
            partial.noalias() = spec.chol_l.row(i).head(i) * z.topRows(i);
        } else {
            partial.setZero();
        }
        for (int j = 0; j < pairs; ++j) uniforms[j] = rng.uniform();

        const double lii = std::max(spec.chol_l(i, i), 1e-300);
        const double lo_i = region.lower[i], hi_i = region.upper[i], mu_i = spec.mu[i];
        const bool lo_inf = std::isinf(lo_i), hi_inf = std::isinf(hi_i);
        for (int j = 0; j < n; ++j) {
            if (w[j] == 0.0) {
                z(i, j) = 0.0;
                continue;
            }
            const double lo = lo_inf ? -kInf : (lo_i - mu_i - partial[j]) / lii;
            const double hi = hi_inf ? kInf : (hi_i - mu_i - partial[j]) / lii;
            const double p_lo = lo_inf ? 0.0 : norm_cdf(lo);
            const double p_hi = hi_inf ? 1.0 : norm_cdf(hi);
            const double mass = p_hi - p_lo;
            if (!(mass > 1e-300)) {
                w[j] = 0.0;
                z(i, j) = 0.0;
                continue;
            }
            const double u = j < pairs ? uniforms[j] : 1.0 - uniforms[j - pairs];
            double zi = norm_cdf_inv(p_lo + u * mass);
            if (!lo_inf && zi < lo) zi = lo;
            if (!hi_inf && zi > hi) zi = hi;
            z(i, j) = zi;
            w[j] *= mass;
        }
    }

    Matrix x = (spec.chol_l * z).colwise() + spec.mu;
    // keep samples inside the rectangle against floating-point drift
    for (int i = 0; i < c; ++i) {
        x.row(i) = x.row(i).cwiseMax(region.lower[i]).cwiseMin(region.upper[i]);
    }

    acc.proposals = n;
    acc.wsum = w.sum();
    acc.wx.noalias() = x * w.matrix();
    Matrix xw = x.array().rowwise() * w.transpose();
    acc.wxx.noalias() = xw * x.transpose();
    // standard errors over antithetic pairs, which are iid groups:
    // b_p = w_a + w_b, a_p = w_a x_a + w_b x_b
    for (int p = 0; p < pairs; ++p) {
        const double b = w[p] + w[p + pairs];
        acc.w2sum += b * b;
        const Vector a = w[p] * x.col(p) + w[p + pairs] * x.col(p + pairs);
        acc.w2x += b * a;
        acc.w2x2 += a.cwiseAbs2();
    }
    return acc;
}

inline MomentAccumulator sample_chunk(const SamplerSpec& spec, const CensorRegion& region,
                                      std::uint64_t seed, std::uint64_t stream, int chunk) {
    return spec.sequential ? sample_chunk_ghk(spec, region, seed, stream, chunk)
                           : sample_chunk_reject(spec, region, seed, stream, chunk);
}

// Run chunks [first_stream, first_stream + n_chunks) across worker threads
// and merge them in stream order.
inline void run_chunks(const SamplerSpec& spec, const CensorRegion& region, std::uint64_t seed,
                       std::uint64_t first_stream, int n_chunks, int chunk_size,
                       MomentAccumulator& acc) {
    const int c = static_cast<int>(spec.mu.size());
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int n_threads = static_cast<int>(std::min<unsigned>(hw, n_chunks));

    if (n_threads <= 1) {
        for (int k = 0; k < n_chunks; ++k) {
            acc.merge(sample_chunk(spec, region, seed, first_stream + k, chunk_size));
        }
        return;
    }

    std::vector<MomentAccumulator> parts(n_chunks, MomentAccumulator(c));
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) {
        workers.emplace_back([&] {
            for (;;) {
                const int k = next.fetch_add(1);
                if (k >= n_chunks) return;
                parts[k] = sample_chunk(spec, region, seed, first_stream + k, chunk_size);
            }
        });
    }
    for (auto& w : workers) w.join();
    for (const auto& p : parts) acc.merge(p);
}

struct MomentEstimate {
    Vector mean;
    Matrix cov;
    double se = kInf;  // max over components of the mean's standard error
};

inline MomentEstimate estimate_from(const MomentAccumulator& acc) {
    MomentEstimate est;
    const int c = static_cast<int>(acc.wx.size());
    if (acc.wsum <= 0.0) return est;
    est.mean = acc.wx / acc.wsum;
    est.cov = symmetrized(acc.wxx / acc.wsum - est.mean * est.mean.transpose());
    // Delta-method standard error of the self-normalized mean estimate.
    double worst = 0.0;
    for (int i = 0; i < c; ++i) {
        const double num = acc.w2x2[i] - 2.0 * est.mean[i] * acc.w2x[i] +
                           est.mean[i] * est.mean[i] * acc.w2sum;
        worst = std::max(worst, std::sqrt(std::max(num, 0.0)) / acc.wsum);
    }
    est.se = worst;
    return est;
}

}  // namespace detail

/// Mean and covariance of N(mu, sigma) conditioned on the rectangle.
/// Throws VanishingMassError when the rectangle's probability mass is below
/// 1e-12 and InvalidCovarianceError for a non-PSD sigma.
inline TruncationResult truncated_mvn_moments(const Vector& mu, const Matrix& sigma,
                                              const CensorRegion& region,
                                              std::uint64_t rng_seed) {
    const int c = static_cast<int>(mu.size());
    require(sigma.rows() == c && sigma.cols() == c, "truncated_mvn_moments: sigma shape");
    require(region.dim() == c, "truncated_mvn_moments: region dimension");
    region.validate();
    if (c == 0) return TruncationResult{Vector(0), Matrix(0, 0), 0.0, 1.0};

    if (!all_finite(mu) || !all_finite(sigma)) {
        throw InvalidCovarianceError("truncated_mvn_moments: non-finite inputs");
    }
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if (asymmetry(sigma) > 1e-8 * scale) {
        throw InvalidCovarianceError("truncated_mvn_moments: sigma not symmetric");
    }
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
        if (es.eigenvalues().minCoeff() <
            -1e-8 * std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300)) {
            throw InvalidCovarianceError("truncated_mvn_moments: sigma not PSD");
        }
    }

    if (region.all_infinite()) return TruncationResult{mu, sigma, 0.0, 1.0};

    if (sigma.diagonal().maxCoeff() <= 0.0) {
        // Point mass: either it sits inside the rectangle or the region is empty.
        for (int i = 0; i < c; ++i) {
            if (mu[i] < region.lower[i] || mu[i] > region.upper[i]) {
                throw VanishingMassError(0.0, detail::kMassFloor);
            }
        }
        return TruncationResult{mu, sigma, 0.0, 1.0};
    }

    if (c == 1) {
        const auto t = detail::truncated_normal_1d(mu[0], sigma(0, 0), region.lower[0],
                                                   region.upper[0]);
        if (!(t.mass > detail::kMassFloor)) {
            throw VanishingMassError(t.mass, detail::kMassFloor);
        }
        TruncationResult out;
        out.mean = Vector::Constant(1, t.mean);
        out.cov = Matrix::Constant(1, 1, t.var);
        out.estimator_error = 0.0;
        out.mass = t.mass;
        return out;
    }

    // Marginal masses upper-bound the joint mass; bail out early when any
    // coordinate already rules the rectangle out.
    for (int i = 0; i < c; ++i) {
        const auto m = detail::truncated_normal_1d(mu[i], sigma(i, i), region.lower[i],
                                                   region.upper[i]);
        if (!(m.mass > detail::kMassFloor)) {
            throw VanishingMassError(m.mass, detail::kMassFloor);
        }
    }

    detail::SamplerSpec spec;
    spec.mu = mu;
    {
        Eigen::LLT<Matrix> llt(sigma);
        if (llt.info() == Eigen::Success) {
            spec.chol_l = llt.matrixL();
        } else {
            const double jitter = 1e-12 * std::max(1.0, sigma.diagonal().maxCoeff());
            Eigen::LLT<Matrix> retry(sigma + jitter * Matrix::Identity(c, c));
            if (retry.info() != Eigen::Success) {
                throw InvalidCovarianceError("truncated_mvn_moments: cholesky failed");
            }
            spec.chol_l = retry.matrixL();
        }
    }

    const double target_se = 1e-3 * std::sqrt(sigma.diagonal().maxCoeff());
    constexpr int kChunk = 1 << 15;
    constexpr int kPilotChunks = 2;
    constexpr double kMaxProposals = double(1 << 24);

    std::uint64_t stream = 0;
    detail::MomentAccumulator acc(c);
    detail::run_chunks(spec, region, rng_seed, stream, kPilotChunks, kChunk, acc);
    stream += kPilotChunks;

    if (acc.mass() < 0.25) {
        // Rejection efficiency is capped by the rectangle mass. Switch to the
        // sequential-conditioning importance sampler, which places every
        // sample inside the rectangle and carries the mass in its weights.
        spec.sequential = true;
        detail::MomentAccumulator ghk_acc(c);
        detail::run_chunks(spec, region, rng_seed, stream, kPilotChunks, kChunk, ghk_acc);
        stream += kPilotChunks;
        acc = std::move(ghk_acc);
        log_debug("truncated_mvn_moments: switched to sequential conditioning");
    }

    detail::MomentEstimate est = detail::estimate_from(acc);
    while (est.se > target_se && acc.proposals < kMaxProposals) {
        // Scale the remaining work from the measured standard error.
        const double factor = est.se / target_se;
        double want = std::ceil((factor * factor - 1.0) * acc.proposals / kChunk);
        const double budget = std::floor((kMaxProposals - acc.proposals) / kChunk);
        want = std::min(std::max(want, 1.0), std::max(budget, 1.0));
        const int n_chunks = static_cast<int>(std::min(want, 128.0));
        detail::run_chunks(spec, region, rng_seed, stream, n_chunks, kChunk, acc);
        stream += n_chunks;
        est = detail::estimate_from(acc);
    }

    if (!(acc.mass() > detail::kMassFloor)) {
        throw VanishingMassError(acc.mass(), detail::kMassFloor);
    }
    if (est.se > target_se) {
        log_info("truncated_mvn_moments: sample budget exhausted, se=" + std::to_string(est.se));
    }

    TruncationResult out;
    out.mean = est.mean.cwiseMax(region.lower).cwiseMin(region.upper);
    out.cov = repair_covariance(est.cov);
    out.estimator_error = est.se;
    out.mass = acc.mass();
    return out;
}

}  // namespace cekf
