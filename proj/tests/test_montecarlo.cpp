// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#include "test_support.hpp"
#include "tlspose/montecarlo.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace tlspose;
using tlspose::testing::simulation_instance;
using tlspose::testing::simulation_truth;
using tlspose::testing::rel_frob;

namespace
{

MonteCarloConfig simulation_config(std::size_t n, std::uint64_t seed)
{
    MonteCarloConfig cfg;
    cfg.n_samples = n;
    cfg.rng_seed = seed;
    cfg.truth = simulation_truth();
    cfg.noiseless = simulation_instance();
    return cfg;
}

const MonteCarloReport& simulation_run()
{
    static const MonteCarloReport rep = run_monte_carlo(simulation_config(10000, 42));
    return rep;
}

} // namespace

TEST(CounterRng, SameSeedAndStreamReproduce)
{
    CounterRng a(7, 3), b(7, 3);
    for (int k = 0; k < 1000; ++k) {
        ASSERT_EQ(a.next_u64(), b.next_u64());
    }
}

TEST(CounterRng, StreamsAndSeedsDiffer)
{
    std::set<std::uint64_t> firsts;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        for (std::uint64_t stream = 0; stream < 25; ++stream) {
            firsts.insert(CounterRng(seed, stream).next_u64());
        }
    }
    EXPECT_EQ(firsts.size(), 100u);
}

TEST(CounterRng, UniformInHalfOpenUnitInterval)
{
    CounterRng rng(1);
    double sum = 0.0;
    for (int k = 0; k < 100000; ++k) {
        const double u = rng.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LE(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / 100000.0, 0.5, 0.005);
}

TEST(CounterRng, NormalMoments)
{
    CounterRng rng(2);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double z = rng.normal();
        s1 += z;
        s2 += z * z;
    }
    EXPECT_NEAR(s1 / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(SampleNoise, IdentityCovarianceGivesRawNormals)
{
    CounterRng a(5, 0), b(5, 0);
    const auto s = sample_noise(NoiseModel::from_joint(Mat6::Identity()), a);
    Vec6 z;
    for (int k = 0; k < 6; ++k) {
        z(k) = b.normal();
    }
    EXPECT_LT((s.delta_r - z.head<3>()).norm(), 1e-15);
    EXPECT_LT((s.delta_b - z.tail<3>()).norm(), 1e-15);
}

TEST(SampleNoise, ReproducesSimulationCovariance)
{
    const NoiseModel n = simulation_instance().observations[0].noise;
    const Mat6 r = n.joint();
    CounterRng rng(9);
    Mat6 acc = Mat6::Zero();
    const int draws = 1000000;
    for (int k = 0; k < draws; ++k) {
        const auto s = sample_noise(n, rng);
        Vec6 x;
        x << s.delta_r, s.delta_b;
        acc += x * x.transpose();
    }
    acc /= draws;
    for (int i = 0; i < 6; ++i) {
        EXPECT_NEAR(acc(i, i), r(i, i), 0.02 * r(i, i));
    }
    // The strongest off-diagonal couplings keep their sign and size.
    EXPECT_NEAR(acc(2, 5), r(2, 5), 0.02 * std::sqrt(r(2, 2) * r(5, 5)));
    EXPECT_NEAR(acc(4, 5), r(4, 5), 0.02 * std::sqrt(r(4, 4) * r(5, 5)));
    EXPECT_NEAR(acc(2, 3), r(2, 3), 0.02 * std::sqrt(r(2, 2) * r(3, 3)));
    EXPECT_LT(rel_frob(acc, r), 0.02);
}

TEST(SampleNoise, NonSpdThrows)
{
    Mat6 r = Mat6::Identity();
    r(3, 3) = -1.0;
    CounterRng rng(0);
    EXPECT_THROW(sample_noise(NoiseModel::from_joint(r), rng), NonSpdError);
}

TEST(RandomSpdNoise, IsSpdAndScalesLinearly)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        CounterRng a(seed), b(seed);
        const NoiseModel small = random_spd_noise(1e-6, a);
        const NoiseModel large = random_spd_noise(3e-6, b);
        EXPECT_TRUE(noise_is_spd(small));
        EXPECT_NEAR(large.joint().trace(), 3.0 * small.joint().trace(), 1e-15);
    }
    CounterRng rng(0);
    EXPECT_THROW(random_spd_noise(0.0, rng), std::invalid_argument);
}

TEST(RunMonteCarlo, SimulationInstanceIsCalibrated)
{
    const auto& rep = simulation_run();
    EXPECT_EQ(rep.n_failed, 0u);
    EXPECT_FALSE(rep.failed);
    EXPECT_EQ(rep.coordinates.size(), 6u + 12u * 3u);
    for (const auto& c : rep.coordinates) {
        EXPECT_GE(c.coverage, 0.990) << c.name;
        EXPECT_LE(c.coverage, 1.000) << c.name;
    }
    EXPECT_TRUE(rep.calibrated());
}

TEST(RunMonteCarlo, SimulationPoseCovariancesMatchSpread)
{
    const auto& rep = simulation_run();
    EXPECT_LT(rel_frob(rep.empirical_attitude, rep.analytic.p_delta_alpha), 0.05);
    EXPECT_LT(rel_frob(rep.empirical_translation, rep.analytic.cov_p), 0.05);
}

TEST(RunMonteCarlo, SimulationObservationCovariancesMatchSpread)
{
    const auto& rep = simulation_run();
    const auto lin = linearize(simulation_truth().attitude, simulation_instance());
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& e = rep.observations[i];
        const auto& a = rep.analytic.per_observation[i];
        EXPECT_LT(rel_frob(e.est_b, a.p_b), 0.10) << i;
        EXPECT_LT(rel_frob(e.est_r, a.p_r), 0.10) << i;
        EXPECT_LT(rel_frob(e.res_b, a.cov_res_b), 0.10) << i;
        EXPECT_LT(rel_frob(e.res_r, a.cov_res_r), 0.10) << i;
        EXPECT_LT(rel_frob(e.alpha_da, attitude_innovation_cross_covariance(lin, rep.analytic.p_f, i)), 0.10) << i;
    }
}

TEST(RunMonteCarlo, RandomNoiseModelsAreCalibrated)
{
    tlspose::testing::Rng g(31);
    for (std::uint64_t k = 0; k < 10; ++k) {
        const auto gen = tlspose::testing::random_instance(g, 3 + k % 4, 1e-7);
        MonteCarloConfig cfg;
        cfg.n_samples = 4000;
        cfg.rng_seed = 100 + k;
        cfg.truth = gen.truth;
        cfg.noiseless = gen.noiseless;
        const auto rep = run_monte_carlo(cfg);
        EXPECT_EQ(rep.n_failed, 0u);
        // 4000 samples leave about 0.15% standard error on the coverage.
        EXPECT_GE(rep.min_coverage(), 0.985) << k;
        EXPECT_LT(rel_frob(rep.empirical_attitude, rep.analytic.p_delta_alpha), 0.10) << k;
        EXPECT_LT(rel_frob(rep.empirical_translation, rep.analytic.cov_p), 0.10) << k;
    }
}

TEST(RunMonteCarlo, NegligibleNoiseGivesZeroErrors)
{
    auto cfg = simulation_config(1, 3);
    for (auto& o : cfg.noiseless.observations) {
        o.noise = NoiseModel::from_joint(1e-20 * Mat6::Identity());
    }
    cfg.keep_samples = true;
    const auto rep = run_monte_carlo(cfg);
    ASSERT_EQ(rep.sample_indices.size(), 1u);
    for (const auto& e : rep.errors) {
        EXPECT_LT(std::abs(e[0]), 1e-8);
    }
}

TEST(RunMonteCarlo, DeterministicForSeed)
{
    auto cfg = simulation_config(200, 11);
    cfg.keep_samples = true;
    const auto a = run_monte_carlo(cfg);
    const auto b = run_monte_carlo(cfg);
    EXPECT_EQ(a.errors, b.errors);
    EXPECT_EQ(a.empirical_attitude, b.empirical_attitude);
    cfg.rng_seed = 12;
    EXPECT_NE(run_monte_carlo(cfg).errors, a.errors);
}

TEST(RunMonteCarlo, CountsFailedSolves)
{
    auto cfg = simulation_config(50, 1);
    for (auto& o : cfg.noiseless.observations) {
        o.noise = NoiseModel::from_joint(o.noise.joint() * 1e4);
    }
    cfg.solver.max_iterations = 1;
    const auto rep = run_monte_carlo(cfg);
    EXPECT_GT(rep.n_failed, 0u);
    EXPECT_TRUE(rep.failed);
    EXPECT_FALSE(rep.calibrated());
}

TEST(RunMonteCarlo, ZeroSamplesThrow)
{
    auto cfg = simulation_config(0, 0);
    EXPECT_THROW(run_monte_carlo(cfg), std::invalid_argument);
}
