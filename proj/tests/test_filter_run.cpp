#include <gtest/gtest.h>

#include <cmath>

#include "cekf/censored.hpp"
#include "cekf/rng.hpp"
#include "oracles.hpp"

using namespace cekf;

namespace {

DynamicsModel scalar_linear(double a, double q = 0.0) {
    DynamicsModel m;
    m.state_dim = 1;
    m.drift = [a](double, const Vector& x) { return Vector(a * x); };
    m.jacobian = [a](double, const Vector&) { return Matrix::Constant(1, 1, a); };
    m.process_noise = Matrix::Constant(1, 1, q);
    return m;
}

DynamicsModel oscillator(double alpha, double q = 0.0) {
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
    m.process_noise = Matrix::Identity(2, 2) * q;
    return m;
}

ObservationModelFactory first_component_factory(int state_dim, double r_var) {
    return [state_dim, r_var](const std::vector<int>& channels) {
        ObservationModel o;
        o.obs_dim = static_cast<int>(channels.size());
        o.map = [channels](const Vector& x) {
            Vector z(channels.size());
            for (std::size_t i = 0; i < channels.size(); ++i) z[static_cast<int>(i)] = x[0];
            return z;
        };
        o.jacobian = [channels, state_dim](const Vector&) {
            Matrix h = Matrix::Zero(channels.size(), state_dim);
            for (std::size_t i = 0; i < channels.size(); ++i) h(static_cast<int>(i), 0) = 1.0;
            return h;
        };
        o.noise = Matrix::Identity(channels.size(), channels.size()) * r_var;
        return o;
    };
}

GaussianBelief initial_2d() {
    GaussianBelief b;
    b.time = 0.0;
    b.mean = Vector::Zero(2);
    b.cov = Matrix::Identity(2, 2);
    return b;
}

}  // namespace

TEST(FilterRun, ReductionToPlainEkfOnUncensoredData) {
    DynamicsModel model = oscillator(1.0, 1e-4);
    const double r_var = 0.09;
    auto factory = first_component_factory(2, r_var);

    Rng rng(5);
    std::vector<ObservationFrame> data;
    for (int k = 0; k < 60; ++k) {
        ObservationFrame f;
        f.time = 0.2 * (k + 1);
        f.channels.push_back({0, std::sin(0.4 * k) + 0.3 * rng.normal(), false});
        data.push_back(f);
    }

    FilterConfig cfg;
    cfg.seed = 9;
    auto records = filter_run(model, factory, initial_2d(), data, cfg);

    // manual plain EKF with the already-tested core ops
    GaussianBelief b = initial_2d();
    for (std::size_t k = 0; k < data.size(); ++k) {
        b = predict(b, model, data[k].time, cfg.integrator);
        b = update_uncensored(b, factory({0}), Vector::Constant(1, data[k].channels[0].value));
        EXPECT_LT((records[k].corrected.mean - b.mean).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((records[k].corrected.cov - b.cov).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_EQ(records[k].history_size, 0);
    }

    // plain-ekf mode must agree bit-for-bit on uncensored data
    FilterConfig plain = cfg;
    plain.plain_ekf = true;
    auto records2 = filter_run(model, factory, initial_2d(), data, plain);
    for (std::size_t k = 0; k < data.size(); ++k) {
        EXPECT_EQ((records[k].corrected.mean - records2[k].corrected.mean).cwiseAbs().maxCoeff(),
                  0.0);
    }
}

TEST(FilterRun, FullSpaceCensoredEqualsPurePrediction) {
    DynamicsModel model = oscillator(0.7, 1e-5);
    auto factory = first_component_factory(2, 0.04);

    std::vector<ObservationFrame> data;
    for (int k = 0; k < 20; ++k) {
        ObservationFrame f;
        f.time = 0.25 * (k + 1);
        f.channels.push_back({0, 0.0, true, -kInf, kInf});
        data.push_back(f);
    }

    FilterConfig cfg;
    auto records = filter_run(model, factory, initial_2d(), data, cfg);

    GaussianBelief b = initial_2d();
    for (std::size_t k = 0; k < data.size(); ++k) {
        b = predict(b, model, data[k].time, cfg.integrator);
        EXPECT_LT((records[k].corrected.mean - b.mean).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((records[k].corrected.cov - b.cov).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((records[k].naive.mean - b.mean).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(FilterRun, DeterministicPerSeed) {
    DynamicsModel model = oscillator(1.0, 1e-4);
    auto factory = first_component_factory(2, 0.1);
    Rng rng(31);
    std::vector<ObservationFrame> data;
    for (int k = 0; k < 24; ++k) {
        ObservationFrame f;
        f.time = 0.2 * (k + 1);
        const double y = 1.0 - std::cos(0.4 * (k + 1)) + 0.3 * rng.normal();
        const bool cen = y < 0.8;
        f.channels.push_back({0, cen ? 0.8 : y, cen, -kInf, 0.8});
        data.push_back(f);
    }

    FilterConfig cfg;
    cfg.seed = 1234;
    cfg.pruning = PruningPolicy{1e-3, 10};
    auto a = filter_run(model, factory, initial_2d(), data, cfg);
    auto b = filter_run(model, factory, initial_2d(), data, cfg);
    ASSERT_EQ(a.size(), b.size());
    bool any_censored = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ((a[k].corrected.mean - b[k].corrected.mean).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ((a[k].corrected.cov - b[k].corrected.cov).cwiseAbs().maxCoeff(), 0.0);
        any_censored |= a[k].n_censored > 0;
    }
    EXPECT_TRUE(any_censored);
}

TEST(FilterRun, TruncationShrinksTrace) {
    DynamicsModel model = oscillator(1.0, 1e-4);
    auto factory = first_component_factory(2, 0.1);
    Rng rng(77);
    std::vector<ObservationFrame> data;
    for (int k = 0; k < 30; ++k) {
        ObservationFrame f;
        f.time = 0.2 * (k + 1);
        const double y = 1.0 - std::cos(0.4 * (k + 1)) + 0.33 * rng.normal();
        const bool cen = y < 0.8;
        f.channels.push_back({0, cen ? 0.8 : y, cen, -kInf, 0.8});
        data.push_back(f);
    }
    FilterConfig cfg;
    cfg.seed = 3;
    cfg.pruning = PruningPolicy{1e-3, 10};
    auto records = filter_run(model, factory, initial_2d(), data, cfg);
    for (const auto& rec : records) {
        EXPECT_LE(rec.corrected.cov.trace(),
                  rec.naive.cov.trace() + 10.0 * rec.trunc_error + 1e-9);
        EXPECT_LT(asymmetry(rec.corrected.cov), 1e-10);
    }
}

TEST(FilterRun, LinearGaussianMatchesGridBayes) {
    // 1-D linear system with one censored interval; grid quadrature is exact
    const double a = -0.3, r_var = 0.04, dt = 0.5;
    DynamicsModel model = scalar_linear(a);
    model.process_noise = Matrix::Zero(1, 1);

    auto factory = first_component_factory(1, r_var);

    const double x0_mean = 0.8, x0_var = 0.25;
    GaussianBelief init;
    init.time = 0.0;
    init.mean = Vector::Constant(1, x0_mean);
    init.cov = Matrix::Constant(1, 1, x0_var);

    std::vector<double> values{0.9, 0.75, -1.0, 0.45, 0.5, 0.35};
    std::vector<bool> censored{false, false, true, false, false, false};
    const double limit = 0.55;

    std::vector<ObservationFrame> data;
    std::vector<oracles::GridObs> oracle_obs;
    for (std::size_t k = 0; k < values.size(); ++k) {
        ObservationFrame f;
        f.time = dt * (k + 1);
        const bool cen = censored[k];
        f.channels.push_back({0, cen ? limit : values[k], cen, -kInf, limit});
        data.push_back(f);
        oracle_obs.push_back({f.time, values[k], cen, limit});
    }

    FilterConfig cfg;
    cfg.seed = 42;
    cfg.integrator.substeps_per_interval = 50;
    auto records = filter_run(model, factory, init, data, cfg);

    auto posterior = oracles::grid_bayes_1d(a, 0.0, x0_mean, x0_var, oracle_obs, r_var,
                                            -4.0, 4.0, 40001);
    const auto& last = records.back().corrected;
    EXPECT_NEAR(last.mean[0], posterior.mean, 1e-3);
    EXPECT_NEAR(last.cov(0, 0), posterior.var, 1e-3);
}

TEST(FilterRun, ErrorsCarryStepContext) {
    DynamicsModel model;
    model.state_dim = 1;
    model.drift = [](double, const Vector& x) { return Vector(x.array().square().matrix()); };
    model.jacobian = [](double, const Vector& x) { return Matrix(2.0 * x.asDiagonal()); };
    model.process_noise = Matrix::Zero(1, 1);

    auto factory = first_component_factory(1, 0.1);
    GaussianBelief init;
    init.time = 0.0;
    init.mean = Vector::Constant(1, 2.0);
    init.cov = Matrix::Constant(1, 1, 0.1);

    std::vector<ObservationFrame> data;
    ObservationFrame f;
    f.time = 10.0;
    f.channels.push_back({0, 1.0, false});
    data.push_back(f);

    try {
        filter_run(model, factory, init, data, FilterConfig{});
        FAIL() << "expected divergence";
    } catch (const FilterError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("step 0"), std::string::npos) << msg;
        EXPECT_NE(msg.find("diverged"), std::string::npos) << msg;
    }
}

TEST(FilterRun, NonIncreasingTimesRejected) {
    DynamicsModel model = scalar_linear(0.0);
    auto factory = first_component_factory(1, 0.1);
    GaussianBelief init;
    init.time = 0.0;
    init.mean = Vector::Zero(1);
    init.cov = Matrix::Identity(1, 1);
    std::vector<ObservationFrame> data(2);
    data[0].time = 1.0;
    data[0].channels.push_back({0, 0.0, false});
    data[1].time = 1.0;
    data[1].channels.push_back({0, 0.0, false});
    EXPECT_THROW(filter_run(model, factory, init, data, FilterConfig{}), StructuralError);
}
