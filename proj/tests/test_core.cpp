#include <gtest/gtest.h>

#include <cmath>

#include "cekf/filter.hpp"
#include "cekf/linalg.hpp"
#include "cekf/rng.hpp"
#include "oracles.hpp"

using namespace cekf;

namespace {

DynamicsModel zero_dynamics(int n) {
    DynamicsModel m;
    m.state_dim = n;
    m.drift = [n](double, const Vector&) { return Vector::Zero(n); };
    m.jacobian = [n](double, const Vector&) { return Matrix::Zero(n, n); };
    m.process_noise = Matrix::Zero(n, n);
    return m;
}

DynamicsModel oscillator(double alpha) {
    DynamicsModel m;
    m.state_dim = 2;
    m.drift = [alpha](double, const Vector& x) {
        Vector d(2);
        d << alpha * x[1], 4.0 - 4.0 * x[0];
        return d;
    };
    m.jacobian = [alpha](double, const Vector&) {
        Matrix j(2, 2);
        j << 0.0, alpha, -4.0, 0.0;
        return j;
    };
    m.process_noise = Matrix::Zero(2, 2);
    return m;
}

DynamicsModel linear_system(const Matrix& a) {
    DynamicsModel m;
    m.state_dim = static_cast<int>(a.rows());
    m.drift = [a](double, const Vector& x) { return Vector(a * x); };
    m.jacobian = [a](double, const Vector&) { return a; };
    m.process_noise = Matrix::Zero(a.rows(), a.cols());
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// repair_covariance
// ---------------------------------------------------------------------------

TEST(RepairCovariance, ValidPsdUnchanged) {
    Matrix m(2, 2);
    m << 2.0, 0.5, 0.5, 1.0;
    EXPECT_LT((repair_covariance(m) - m).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RepairCovariance, SymmetrizesOnly) {
    Matrix m(2, 2);
    m << 1.0, 2.0, 0.0, 1.0;
    Matrix expected(2, 2);
    expected << 1.0, 1.0, 1.0, 1.0;
    EXPECT_LT((repair_covariance(m) - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RepairCovariance, ClipsNegativeEigenvalue) {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -1e-6;
    Matrix r = repair_covariance(m);
    EXPECT_NEAR(r(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(r(1, 1), 0.0, 1e-12);
}

TEST(RepairCovariance, NonFiniteThrows) {
    Matrix m = Matrix::Constant(2, 2, std::nan(""));
    EXPECT_THROW(repair_covariance(m), InvalidMatrixError);
}

// ---------------------------------------------------------------------------
// finite_difference_jacobian
// ---------------------------------------------------------------------------

TEST(FiniteDifferenceJacobian, LinearMap) {
    Matrix a(3, 3);
    a << 1.0, 2.0, -0.5, 0.0, -1.0, 3.0, 2.0, 0.25, 1.5;
    auto g = [&a](const Vector& x) { return Vector(a * x); };
    Vector x(3);
    x << 0.3, -1.2, 2.0;
    EXPECT_LT((finite_difference_jacobian(g, x, 1e-6) - a).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FiniteDifferenceJacobian, OscillatorDrift) {
    DynamicsModel m = oscillator(1.0);
    Vector x(2);
    x << 1.0, 1.0;
    auto g = [&m](const Vector& v) { return m.drift(0.0, v); };
    Matrix expected(2, 2);
    expected << 0.0, 1.0, -4.0, 0.0;
    EXPECT_LT((finite_difference_jacobian(g, x, 1e-6) - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FiniteDifferenceJacobian, Identity) {
    auto g = [](const Vector& x) { return x; };
    Vector x = Vector::LinSpaced(4, -2.0, 1.0);
    Matrix j = finite_difference_jacobian(g, x, 1e-6);
    EXPECT_LT((j - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
}

// ---------------------------------------------------------------------------
// rng
// ---------------------------------------------------------------------------

TEST(Rng, DeterministicPerSeedAndStream) {
    Rng a(42, 0), b(42, 0), c(42, 1);
    bool any_diff = false;
    for (int i = 0; i < 100; ++i) {
        auto va = a.next_u64(), vb = b.next_u64(), vc = c.next_u64();
        EXPECT_EQ(va, vb);
        any_diff |= (va != vc);
    }
    EXPECT_TRUE(any_diff);
}

TEST(Rng, NormalMomentsAndTails) {
    Rng rng(7);
    const int n = 2'000'000;
    double sum = 0, sum2 = 0, sum3 = 0, sum4 = 0;
    int beyond3 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sum2 += z * z;
        sum3 += z * z * z;
        sum4 += z * z * z * z;
        if (std::abs(z) > 3.0) ++beyond3;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(double(n)));
    EXPECT_NEAR(var, 1.0, 0.01);
    EXPECT_NEAR(sum3 / n, 0.0, 0.02);
    EXPECT_NEAR(sum4 / n, 3.0, 0.05);
    const double p3 = 2.0 * 0.5 * std::erfc(3.0 / std::sqrt(2.0));
    EXPECT_NEAR(double(beyond3) / n, p3, 5.0 * std::sqrt(p3 / n));
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

TEST(Predict, ZeroDynamicsIdentity) {
    DynamicsModel m = zero_dynamics(3);
    GaussianBelief b;
    b.time = 1.0;
    b.mean = Vector::LinSpaced(3, 1.0, 3.0);
    b.cov = Matrix::Identity(3, 3) * 0.5;
    GaussianBelief out = predict(b, m, 11.0, IntegratorSettings{25});
    EXPECT_DOUBLE_EQ(out.time, 11.0);
    EXPECT_LT((out.mean - b.mean).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((out.cov - b.cov).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Predict, OscillatorClosedForm) {
    DynamicsModel m = oscillator(1.0);
    GaussianBelief b;
    b.time = 0.0;
    b.mean = Vector::Zero(2);
    b.cov = Matrix::Zero(2, 2);
    GaussianBelief out = predict(b, m, 0.2, IntegratorSettings{20});
    const Vector expected = oracles::oscillator_closed_form(1.0, 0.2);
    EXPECT_NEAR(out.mean[0], 0.07894, 2e-5);  // 1 - cos(0.4)
    EXPECT_NEAR(out.mean[1], 0.77884, 2e-5);  // 2 sin(0.4)
    EXPECT_LT((out.mean - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Predict, LinearCovarianceMatchesMatrixExponential) {
    Matrix a(3, 3);
    a << -0.3, 0.7, 0.1, -0.5, -0.2, 0.4, 0.2, 0.0, -0.6;
    DynamicsModel m = linear_system(a);
    GaussianBelief b;
    b.time = 0.0;
    b.mean = Vector::Ones(3);
    Matrix p0(3, 3);
    p0 << 1.0, 0.2, 0.0, 0.2, 2.0, -0.3, 0.0, -0.3, 0.7;
    b.cov = p0;
    const double dt = 0.3;
    GaussianBelief out = predict(b, m, dt, IntegratorSettings{50});
    const Matrix phi = oracles::expm(a * dt);
    const Matrix expected = phi * p0 * phi.transpose();
    EXPECT_LT((out.cov - expected).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((out.mean - phi * b.mean).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Predict, FlowComposition) {
    DynamicsModel m = oscillator(0.8);
    GaussianBelief b;
    b.time = 0.0;
    b.mean = Vector::Constant(2, 0.4);
    b.cov = Matrix::Identity(2, 2) * 0.3;
    m.process_noise = Matrix::Identity(2, 2) * 0.01;

    GaussianBelief whole = predict(b, m, 1.0, IntegratorSettings{40});
    GaussianBelief half = predict(b, m, 0.5, IntegratorSettings{20});
    GaussianBelief composed = predict(half, m, 1.0, IntegratorSettings{20});
    EXPECT_LT((whole.mean - composed.mean).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((whole.cov - composed.cov).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Predict, DivergenceNamesTime) {
    DynamicsModel m;
    m.state_dim = 1;
    m.drift = [](double, const Vector& x) { return Vector(x.array().square().matrix()); };
    m.jacobian = [](double, const Vector& x) { return Matrix(2.0 * x.asDiagonal()); };
    m.process_noise = Matrix::Zero(1, 1);
    GaussianBelief b;
    b.time = 0.0;
    b.mean = Vector::Constant(1, 1.0);
    b.cov = Matrix::Zero(1, 1);
    EXPECT_THROW(predict(b, m, 5.0, IntegratorSettings{10}), IntegrationDivergedError);
}

TEST(Predict, BeliefInvariantsHold) {
    DynamicsModel m = oscillator(1.3);
    m.process_noise = Matrix::Identity(2, 2) * 0.05;
    GaussianBelief b;
    b.time = 0.0;
    b.mean = Vector::Constant(2, 0.2);
    b.cov = Matrix::Identity(2, 2);
    GaussianBelief out = predict(b, m, 2.0, IntegratorSettings{30});
    EXPECT_LT(asymmetry(out.cov), 1e-10);
    Eigen::SelfAdjointEigenSolver<Matrix> es(out.cov);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * es.eigenvalues().maxCoeff());
}

// ---------------------------------------------------------------------------
// update_uncensored
// ---------------------------------------------------------------------------

namespace {

ObservationModel linear_obs(const Matrix& h, const Matrix& r) {
    ObservationModel o;
    o.obs_dim = static_cast<int>(h.rows());
    o.map = [h](const Vector& x) { return Vector(h * x); };
    o.jacobian = [h](const Vector&) { return h; };
    o.noise = r;
    return o;
}

}  // namespace

TEST(UpdateUncensored, UninformativeMeasurement) {
    GaussianBelief prior;
    prior.mean = Vector::LinSpaced(2, 1.0, 2.0);
    prior.cov = Matrix::Identity(2, 2);
    ObservationModel obs = linear_obs(Matrix::Identity(2, 2), Matrix::Identity(2, 2) * 1e12);
    Vector z(2);
    z << 100.0, -50.0;
    GaussianBelief post = update_uncensored(prior, obs, z);
    EXPECT_LT((post.mean - prior.mean).norm() / prior.mean.norm(), 1e-4);
    EXPECT_LT((post.cov - prior.cov).norm() / prior.cov.norm(), 1e-4);
}

TEST(UpdateUncensored, ScalarHandCase) {
    GaussianBelief prior;
    prior.mean = Vector::Zero(1);
    prior.cov = Matrix::Identity(1, 1);
    ObservationModel obs = linear_obs(Matrix::Identity(1, 1), Matrix::Identity(1, 1));
    Vector z = Vector::Constant(1, 2.0);
    GaussianBelief post = update_uncensored(prior, obs, z);
    EXPECT_NEAR(post.mean[0], 1.0, 1e-14);
    EXPECT_NEAR(post.cov(0, 0), 0.5, 1e-14);
}

TEST(UpdateUncensored, ExactMeasurementLimit) {
    GaussianBelief prior;
    prior.mean = Vector::Constant(3, 5.0);
    prior.cov = Matrix::Identity(3, 3) * 2.0;
    ObservationModel obs = linear_obs(Matrix::Identity(3, 3), Matrix::Identity(3, 3) * 1e-12);
    Vector z(3);
    z << 1.0, 2.0, 3.0;
    GaussianBelief post = update_uncensored(prior, obs, z);
    EXPECT_LT((post.mean - z).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(UpdateUncensored, SingularInnovationThrows) {
    GaussianBelief prior;
    prior.mean = Vector::Zero(2);
    prior.cov = Matrix::Zero(2, 2);  // no prior uncertainty, no noise
    ObservationModel obs = linear_obs(Matrix::Identity(2, 2), Matrix::Zero(2, 2));
    EXPECT_THROW(update_uncensored(prior, obs, Vector::Zero(2)), SingularInnovationError);
}

TEST(UpdateUncensored, BlockDiagonalEqualsSequentialScalar) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 4, m = 3;
        Matrix h(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) h(i, j) = rng.normal();
        Vector r_diag(m);
        for (int i = 0; i < m; ++i) r_diag[i] = 0.2 + rng.uniform();
        Matrix a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
        Matrix p = a * a.transpose() + Matrix::Identity(n, n) * 0.1;

        GaussianBelief prior;
        prior.mean = Vector::Zero(n);
        for (int i = 0; i < n; ++i) prior.mean[i] = rng.normal();
        prior.cov = p;
        Vector z(m);
        for (int i = 0; i < m; ++i) z[i] = rng.normal();

        GaussianBelief joint =
            update_uncensored(prior, linear_obs(h, Matrix(r_diag.asDiagonal())), z);

        GaussianBelief seq = prior;
        for (int i = 0; i < m; ++i) {
            seq = update_uncensored(
                seq, linear_obs(h.row(i), Matrix::Constant(1, 1, r_diag[i])),
                Vector::Constant(1, z[i]));
        }
        EXPECT_LT((joint.mean - seq.mean).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((joint.cov - seq.cov).cwiseAbs().maxCoeff(), 1e-10);
    }
}
