#include "pmbm/gaussian.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using pmbm::GaussianDensity;
using pmbm::GaussianMixture;
using pmbm::WeightedGaussian;

namespace {

Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = g(rng);
    return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).norm() / std::max(1.0, b.norm());
}

double scalar_log_normal(double x, double mean, double var) {
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (x - mean) * (x - mean) / var;
}

}  // namespace

TEST(LogSumExp, Basics) {
    const std::vector<double> v{std::log(0.25), std::log(0.75)};
    EXPECT_NEAR(pmbm::log_sum_exp(v), 0.0, 1e-15);
    EXPECT_EQ(pmbm::log_sum_exp(std::vector<double>{}), pmbm::kNegInf);
    EXPECT_EQ(pmbm::log_sum_exp(pmbm::kNegInf, pmbm::kNegInf), pmbm::kNegInf);
    EXPECT_NEAR(pmbm::log_sum_exp(1000.0, 1000.0), 1000.0 + std::log(2.0), 1e-12);
}

TEST(Unscented, IdentityWithoutNoiseIsExact) {
    std::mt19937_64 rng(1);
    const GaussianDensity g{random_vector(rng, 4), random_spd(rng, 4)};
    const auto r = pmbm::unscented_transform(g, [](const Eigen::VectorXd& x) { return x; }, Eigen::MatrixXd::Zero(4, 4));
    EXPECT_LT(rel_err(r.output.mean, g.mean), 1e-9);
    EXPECT_LT(rel_err(r.output.cov, g.cov), 1e-9);
    EXPECT_LT(rel_err(r.cross_cov, g.cov), 1e-9);
}

TEST(Unscented, IdentityAddsNoise) {
    const GaussianDensity g{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)};
    const auto r = pmbm::unscented_transform(g, [](const Eigen::VectorXd& x) { return x; }, Eigen::MatrixXd::Identity(3, 3));
    EXPECT_LT(rel_err(r.output.cov, 2.0 * Eigen::MatrixXd::Identity(3, 3)), 1e-12);
}

TEST(Unscented, LinearMapMatchesAnalyticPropagation) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index n = std::uniform_int_distribution<Eigen::Index>(1, 8)(rng);
        const Eigen::Index m = std::uniform_int_distribution<Eigen::Index>(1, 8)(rng);
        Eigen::MatrixXd a(m, n);
        for (Eigen::Index i = 0; i < m; ++i) a.row(i) = random_vector(rng, n).transpose();
        const Eigen::VectorXd b = random_vector(rng, m);
        const GaussianDensity g{random_vector(rng, n, 5.0), random_spd(rng, n)};
        const Eigen::MatrixXd q = random_spd(rng, m);
        pmbm::SigmaParams sp;
        sp.alpha = std::uniform_real_distribution<double>(0.3, 1.0)(rng);
        sp.kappa = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
        const auto r = pmbm::unscented_transform(g, [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return a * x + b; }, q, sp);
        EXPECT_LT(rel_err(r.output.mean, a * g.mean + b), 1e-9);
        EXPECT_LT(rel_err(r.output.cov, a * g.cov * a.transpose() + q), 1e-9);
        EXPECT_LT(rel_err(r.cross_cov, g.cov * a.transpose()), 1e-9);
    }
}

TEST(Unscented, RejectsNonPsdInput) {
    Eigen::MatrixXd bad(2, 2);
    bad << 1, 0, 0, -1;
    const GaussianDensity g{Eigen::VectorXd::Zero(2), bad};
    EXPECT_THROW(pmbm::unscented_transform(g, [](const Eigen::VectorXd& x) { return x; }, Eigen::MatrixXd::Zero(2, 2)),
                 pmbm::NumericalError);
}

TEST(CovarianceSqrt, SemidefiniteGetsJitter) {
    Eigen::MatrixXd p(2, 2);
    p << 1, 1, 1, 1;  // rank one
    const Eigen::MatrixXd l = pmbm::covariance_sqrt(p);
    EXPECT_LT((l * l.transpose() - p).norm(), 1e-9);
    EXPECT_TRUE(pmbm::covariance_sqrt(Eigen::MatrixXd::Zero(3, 3)).isZero(0.0));
}

TEST(UkfPredict, ZeroVelocityWithoutNoiseIsUnchanged) {
    Eigen::VectorXd mean(2);
    mean << 3.0, 0.0;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
    cov(0, 0) = 2.0;
    const GaussianDensity g{mean, cov};
    auto cv = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        Eigen::VectorXd y = x;
        y(0) += x(1);
        return y;
    };
    const auto out = pmbm::ukf_predict(g, cv, Eigen::MatrixXd::Zero(2, 2));
    EXPECT_LT(rel_err(out.mean, mean), 1e-9);
    EXPECT_LT(rel_err(out.cov, cov), 1e-9);
}

TEST(UkfPredict, ConstantVelocityToyMatchesKalman) {
    // x' = F x with F = [[1, 1], [0, 1]]; P' = F P F^T.
    Eigen::Vector2d mean(1.0, 2.0);
    Eigen::Matrix2d p;
    p << 2.0, 0.5, 0.5, 1.0;
    const GaussianDensity g{mean, p};
    auto cv = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        Eigen::VectorXd y = x;
        y(0) += x(1);
        return y;
    };
    const auto out = pmbm::ukf_predict(g, cv, Eigen::MatrixXd::Zero(2, 2));
    // Hand-expanded F P F^T.
    Eigen::Matrix2d expected;
    expected << 2.0 + 2 * 0.5 + 1.0, 0.5 + 1.0, 0.5 + 1.0, 1.0;
    EXPECT_NEAR(out.mean(0), 3.0, 1e-12);
    EXPECT_NEAR(out.mean(1), 2.0, 1e-12);
    EXPECT_LT(rel_err(out.cov, expected), 1e-12);

    const Eigen::MatrixXd q = Eigen::Vector2d(0.1, 0.2).asDiagonal();
    const auto noisy = pmbm::ukf_predict(g, cv, q);
    EXPECT_LT(rel_err(noisy.cov, expected + q), 1e-12);
}

TEST(UkfUpdate, ScalarKalmanOracle) {
    const GaussianDensity g{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
    const auto r = pmbm::ukf_update(g, Eigen::VectorXd::Constant(1, 2.0), [](const Eigen::VectorXd& x) { return x; },
                                    Eigen::MatrixXd::Identity(1, 1));
    EXPECT_NEAR(r.posterior.mean(0), 1.0, 1e-12);
    EXPECT_NEAR(r.posterior.cov(0, 0), 0.5, 1e-12);
    EXPECT_NEAR(r.log_likelihood, scalar_log_normal(2.0, 0.0, 2.0), 1e-12);
}

TEST(UkfUpdate, ZeroInnovationKeepsMean) {
    std::mt19937_64 rng(4);
    const GaussianDensity g{random_vector(rng, 3), random_spd(rng, 3)};
    auto h = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.head(2); };
    const pmbm::MeasurementPrediction pred(g, h, Eigen::MatrixXd::Identity(2, 2));
    const auto post = pred.posterior(pred.predicted_mean());
    EXPECT_LT(rel_err(post.mean, g.mean), 1e-12);
}

TEST(UkfUpdate, UninformativeMeasurement) {
    std::mt19937_64 rng(5);
    const GaussianDensity g{random_vector(rng, 3), random_spd(rng, 3)};
    const auto r = pmbm::ukf_update(g, Eigen::VectorXd::Constant(3, 100.0), [](const Eigen::VectorXd& x) { return x; },
                                    1e12 * Eigen::MatrixXd::Identity(3, 3));
    EXPECT_LT((r.posterior.mean - g.mean).norm() / g.mean.norm(), 1e-6);
    EXPECT_LT(rel_err(r.posterior.cov, g.cov), 1e-6);
}

TEST(UkfUpdate, SingularInnovationRejected) {
    const GaussianDensity g{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2)};
    EXPECT_THROW(pmbm::ukf_update(g, Eigen::VectorXd::Zero(2), [](const Eigen::VectorXd& x) { return x; },
                                  Eigen::MatrixXd::Zero(2, 2)),
                 pmbm::NumericalError);
}

TEST(UkfUpdate, LinearCaseMatchesKalmanFilter) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = std::uniform_int_distribution<Eigen::Index>(1, 6)(rng);
        const Eigen::Index m = std::uniform_int_distribution<Eigen::Index>(1, 4)(rng);
        Eigen::MatrixXd h(m, n);
        for (Eigen::Index i = 0; i < m; ++i) h.row(i) = random_vector(rng, n).transpose();
        const GaussianDensity g{random_vector(rng, n), random_spd(rng, n)};
        const Eigen::MatrixXd r = random_spd(rng, m);
        const Eigen::VectorXd z = random_vector(rng, m, 3.0);
        const auto u = pmbm::ukf_update(g, z, [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return h * x; }, r);

        const Eigen::MatrixXd s = h * g.cov * h.transpose() + r;
        const Eigen::MatrixXd k = g.cov * h.transpose() * s.inverse();
        const Eigen::VectorXd mean = g.mean + k * (z - h * g.mean);
        const Eigen::MatrixXd cov = (Eigen::MatrixXd::Identity(n, n) - k * h) * g.cov;
        const double ll = pmbm::log_gaussian_pdf(z, GaussianDensity{h * g.mean, s});
        EXPECT_LT(rel_err(u.posterior.mean, mean), 1e-9);
        EXPECT_LT(rel_err(u.posterior.cov, cov), 1e-9);
        EXPECT_NEAR(u.log_likelihood, ll, 1e-9 * std::max(1.0, std::abs(ll)));
    }
}

TEST(UkfUpdate, LikelihoodMatchesMonteCarloIntegral) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 3; ++trial) {
        const Eigen::Index n = 3, m = 2;
        Eigen::MatrixXd h(m, n);
        for (Eigen::Index i = 0; i < m; ++i) h.row(i) = random_vector(rng, n).transpose();
        const GaussianDensity g{random_vector(rng, n), random_spd(rng, n)};
        const Eigen::MatrixXd r = random_spd(rng, m);
        const Eigen::VectorXd z = h * g.mean + random_vector(rng, m);
        const auto u = pmbm::ukf_update(g, z, [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return h * x; }, r);

        // E_{x ~ f}[N(z; Hx, R)] by sampling.
        const Eigen::LLT<Eigen::MatrixXd> r_llt(r);
        const Eigen::MatrixXd l = g.cov.llt().matrixL();
        std::normal_distribution<double> n01(0.0, 1.0);
        const int samples = 1'000'000;
        double sum = 0.0, sum2 = 0.0;
        Eigen::VectorXd e(n);
        for (int s = 0; s < samples; ++s) {
            for (Eigen::Index i = 0; i < n; ++i) e(i) = n01(rng);
            const Eigen::VectorXd x = g.mean + l * e;
            const double v = std::exp(pmbm::log_gaussian_pdf(z, h * x, r_llt));
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / samples;
        const double se = std::sqrt((sum2 / samples - mean * mean) / samples);
        EXPECT_LE(std::abs(std::exp(u.log_likelihood) - mean), 3.0 * se) << "trial " << trial;
    }
}

TEST(MomentMatch, PreservesFirstTwoMoments) {
    std::vector<WeightedGaussian> parts{{std::log(0.25), {Eigen::VectorXd::Constant(1, -1.0), Eigen::MatrixXd::Identity(1, 1)}},
                                        {std::log(0.75), {Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Identity(1, 1)}}};
    const auto m = pmbm::moment_match(parts);
    EXPECT_NEAR(m.log_weight, 0.0, 1e-15);
    EXPECT_NEAR(m.density.mean(0), 0.5, 1e-15);
    // 1 + E[x^2] - E[x]^2 = 1 + 1 - 0.25
    EXPECT_NEAR(m.density.cov(0, 0), 1.75, 1e-15);
}

TEST(GmReduce, IdenticalComponentsMerge) {
    std::mt19937_64 rng(9);
    const GaussianDensity g{random_vector(rng, 3), random_spd(rng, 3)};
    GaussianMixture mix{{{std::log(0.3), g}, {std::log(0.3), g}}};
    const auto out = pmbm::gm_reduce(mix, std::log(1e-5), 4.0, 100);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_NEAR(std::exp(out.components[0].log_weight), 0.6, 1e-12);
    EXPECT_LT(rel_err(out.components[0].density.mean, g.mean), 1e-12);
    EXPECT_LT(rel_err(out.components[0].density.cov, g.cov), 1e-12);
}

TEST(GmReduce, NoOpWhenNothingToDo) {
    GaussianMixture mix;
    for (int i = 0; i < 4; ++i)
        mix.components.push_back({std::log(0.1 * (i + 1)), {Eigen::VectorXd::Constant(2, 100.0 * i), Eigen::MatrixXd::Identity(2, 2)}});
    const auto out = pmbm::gm_reduce(mix, std::log(1e-5), 4.0, 10);
    ASSERT_EQ(out.size(), mix.size());
    for (std::size_t i = 0; i < mix.size(); ++i) {
        EXPECT_EQ(out.components[i].log_weight, mix.components[i].log_weight);
        EXPECT_EQ(out.components[i].density.mean, mix.components[i].density.mean);
        EXPECT_EQ(out.components[i].density.cov, mix.components[i].density.cov);
    }
}

TEST(GmReduce, CapKeepsHeaviest) {
    GaussianMixture mix;
    const double w[] = {0.2, 0.5, 0.3};
    for (int i = 0; i < 3; ++i)
        mix.components.push_back({std::log(w[i]), {Eigen::VectorXd::Constant(1, 50.0 * i), Eigen::MatrixXd::Identity(1, 1)}});
    const auto out = pmbm::gm_reduce(mix, std::log(1e-5), 4.0, 2);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_NEAR(std::exp(out.components[0].log_weight), 0.5, 1e-15);
    EXPECT_NEAR(std::exp(out.components[1].log_weight), 0.3, 1e-15);
}

TEST(GmReduce, PruningRemovesExactlyThePrunedMass) {
    GaussianMixture mix;
    const double w[] = {0.5, 1e-7, 0.25, 2e-6};
    for (int i = 0; i < 4; ++i)
        mix.components.push_back({std::log(w[i]), {Eigen::VectorXd::Constant(1, 50.0 * i), Eigen::MatrixXd::Identity(1, 1)}});
    const auto out = pmbm::gm_reduce(mix, std::log(1e-5), 4.0, 100);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_NEAR(out.mass(), 0.75, 1e-15);
}

TEST(GmReduce, MergingPreservesMass) {
    std::mt19937_64 rng(10);
    GaussianMixture mix;
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int i = 0; i < 30; ++i)
        mix.components.push_back({std::log(u(rng)), {random_vector(rng, 2, 2.0), Eigen::MatrixXd::Identity(2, 2)}});
    const auto out = pmbm::gm_reduce(mix, -std::numeric_limits<double>::infinity(), 4.0, 1000);
    EXPECT_LT(out.size(), mix.size());
    EXPECT_NEAR(out.mass(), mix.mass(), 1e-12 * mix.mass());
    for (const auto& c : out.components) EXPECT_TRUE(pmbm::is_valid(c.density));
}

TEST(GmReduce, RejectsZeroCap) {
    EXPECT_THROW(pmbm::gm_reduce(GaussianMixture{}, 0.0, 4.0, 0), pmbm::InvalidArgument);
}
