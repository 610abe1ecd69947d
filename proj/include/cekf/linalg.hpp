// Covariance hygiene and small linear-algebra helpers used throughout the
// filter: symmetrization, PSD repair by eigenvalue clipping, SPD solves
// without explicit inversion, and finite-difference Jacobians.
#pragma once

#include <cmath>
#include <string>

#include "cekf/log.hpp"
#include "cekf/types.hpp"

namespace cekf {

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Max-norm asymmetry ||M - M^T||_max.
inline double asymmetry(const Matrix& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

/// Symmetrize; clip negative eigenvalues to zero only when the PSD invariant
/// (min eigenvalue >= -1e-8 * max eigenvalue) fails. Repairs are logged.
inline Matrix repair_covariance(const Matrix& m) {
    require(m.rows() == m.cols(), "repair_covariance: matrix not square");
    if (!all_finite(m)) throw InvalidMatrixError("repair_covariance: non-finite entries");
    if (m.size() == 0) return m;

    Matrix sym = symmetrized(m);
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    const Vector& evals = es.eigenvalues();
    const double max_ev = evals.cwiseAbs().maxCoeff();
    const double min_ev = evals.minCoeff();
    if (min_ev >= -1e-8 * max_ev || max_ev == 0.0) return sym;

    log_info("repair_covariance: clipping eigenvalues, min=" + std::to_string(min_ev) +
             " max=" + std::to_string(max_ev));
    Vector clipped = evals.cwiseMax(0.0);
    return symmetrized(es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose());
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped).
inline Matrix psd_sqrt(const Matrix& m) {
    if (m.size() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

/// Solve A X = B for symmetric positive-definite A via Cholesky. Throws
/// SingularInnovationError when the condition estimate exceeds ~1e12.
inline Matrix solve_spd(const Matrix& a, const Matrix& b, const char* what = "innovation") {
    if (!all_finite(a)) throw InvalidMatrixError(std::string(what) + ": non-finite matrix");
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
        throw SingularInnovationError(std::string(what) +
                                      " covariance numerically singular (rcond below 1e-12)");
    }
    return llt.solve(b);
}

/// Solve A X = B for symmetric PSD A, retrying once with a small diagonal
/// jitter when the factorization fails. Small truncated covariances are
/// routinely near-singular.
inline Matrix solve_spd_jittered(const Matrix& a, const Matrix& b, const char* what = "history") {
    if (!all_finite(a)) throw InvalidMatrixError(std::string(what) + ": non-finite matrix");
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success && llt.rcond() >= 1e-14) return llt.solve(b);

    const double scale = a.size() ? std::max(1.0, a.diagonal().cwiseAbs().maxCoeff()) : 1.0;
    Matrix jittered = a + 1e-10 * scale * Matrix::Identity(a.rows(), a.cols());
    log_debug(std::string(what) + ": retrying solve with diagonal jitter");
    Eigen::LLT<Matrix> retry(jittered);
    if (retry.info() != Eigen::Success) {
        throw DegenerateHistoryError(std::string(what) + " covariance singular even after jitter");
    }
    return retry.solve(b);
}

/// Central-difference Jacobian of g at x with per-component step
/// h_rel * max(|x_i|, 1).
inline Matrix finite_difference_jacobian(const std::function<Vector(const Vector&)>& g,
                                         const Vector& x, double h_rel = 1e-6) {
    require(h_rel > 0, "finite_difference_jacobian: h_rel must be positive");
    const Vector g0 = g(x);
    Matrix jac(g0.size(), x.size());
    for (int j = 0; j < x.size(); ++j) {
        const double h = h_rel * std::max(std::abs(x[j]), 1.0);
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const Vector gp = g(xp), gm = g(xm);
        if (!all_finite(gp) || !all_finite(gm)) {
            throw InvalidMatrixError("finite_difference_jacobian: non-finite evaluation");
        }
        jac.col(j) = (gp - gm) / (2.0 * h);
    }
    return jac;
}

/// GaussianBelief invariants: symmetric covariance, eigenvalues not
/// meaningfully negative, consistent dimensions.
inline void check_belief(const GaussianBelief& b, const char* where = "belief") {
    require(b.cov.rows() == b.mean.size() && b.cov.cols() == b.mean.size(),
            std::string(where) + ": mean/cov dimensions disagree");
    if (!all_finite(b.mean) || !all_finite(b.cov)) {
        throw InvalidMatrixError(std::string(where) + ": non-finite belief");
    }
}

}  // namespace cekf
