// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#include "test_support.hpp"
#include "tlspose/analytics.hpp"
#include "tlspose/oracle.hpp"
#include "tlspose/solver.hpp"

#include <gtest/gtest.h>

using namespace tlspose;
using tlspose::testing::simulation_instance;
using tlspose::testing::simulation_truth;
using tlspose::testing::rel_frob;
using tlspose::testing::Rng;

namespace
{

double pose_distance(const Pose& a, const Pose& b)
{
    return std::max(geodesic_distance(a.attitude, b.attitude), (a.translation - b.translation).norm());
}

// Isotropic cost profiled over the translation, written as a weighted
// Wahba loss minus the centroid term.
double isotropic_profiled_cost(const ProblemInstance& inst, const Mat3& a, const std::vector<double>& var)
{
    double w_sum = 0.0, j = 0.0;
    Vec3 b_bar = Vec3::Zero(), r_bar = Vec3::Zero();
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto& o = inst.observations[i];
        const double w = 1.0 / var[i];
        w_sum += w;
        b_bar += w * o.b_tilde;
        r_bar += w * o.r_tilde;
        j += 0.5 * w * (o.b_tilde - a * o.r_tilde).squaredNorm();
    }
    b_bar /= w_sum;
    r_bar /= w_sum;
    return j - 0.5 * w_sum * (b_bar - a * r_bar).squaredNorm();
}

// Gauss-Newton with the attitude update applied in the wrong direction.
Pose sign_flipped_solver(const ProblemInstance& inst, const Pose& start)
{
    RotationMatrix a = start.attitude;
    for (int k = 0; k < 20; ++k) {
        const auto step = gauss_newton_step(a, Vec3::Zero(), inst);
        a = small_rotation_update(-step.delta_alpha, a);
    }
    return Pose{a, solve_translation(a, inst, compute_q_list(a, inst))};
}

} // namespace

TEST(CostDirect, ZeroAtNoiselessTruth) { EXPECT_LT(oracle::cost_direct(simulation_instance(), simulation_truth()), 1e-20); }

TEST(CostDirect, MatchesProductionCost)
{
    Rng g(1);
    for (int k = 0; k < 20; ++k) {
        const auto gen = tlspose::testing::random_instance(g, 5, 1e-4);
        const double j = oracle::cost_direct(gen.noisy, gen.truth);
        EXPECT_NEAR(pose_cost(gen.truth.attitude, gen.truth.translation, gen.noisy), j, 1e-12 * j);
    }
}

TEST(CostDirect, SolutionDoesNotExceedTruth)
{
    Rng g(2);
    for (int k = 0; k < 25; ++k) {
        const auto gen = tlspose::testing::random_instance(g, 3 + static_cast<std::size_t>(k % 6), 1e-4);
        const auto sol = solve_pose(gen.noisy);
        EXPECT_LE(oracle::cost_direct(gen.noisy, sol.pose), oracle::cost_direct(gen.noisy, gen.truth) * (1 + 1e-12));
    }
}

TEST(CostDirect, IsotropicEqualsProfiledWahbaForm)
{
    Rng g(3);
    for (int k = 0; k < 20; ++k) {
        const auto gen = tlspose::testing::random_instance(g, 4 + static_cast<std::size_t>(k % 4), 1e-3, true);
        std::vector<double> var;
        for (std::size_t i = 0; i < gen.sigmas_r.size(); ++i) {
            var.push_back(gen.sigmas_r[i] * gen.sigmas_r[i] + gen.sigmas_b[i] * gen.sigmas_b[i]);
        }
        const RotationMatrix a = tlspose::testing::random_rotation(g);
        const Vec3 p = solve_translation(a, gen.noisy, compute_q_list(a, gen.noisy));
        const double direct = oracle::cost_direct(gen.noisy, Pose{a, p});
        EXPECT_NEAR(direct, isotropic_profiled_cost(gen.noisy, a.matrix(), var), 1e-12 * direct);
    }
}

TEST(BruteForce, RecoversNoiselessSimulationTruth)
{
    const auto bf = oracle::brute_force_minimize(simulation_instance());
    EXPECT_LT(pose_distance(bf.pose, simulation_truth()), 1e-8);
}

TEST(BruteForce, AgreesWithSolverOnRandomInstances)
{
    Rng g(4);
    for (int k = 0; k < 8; ++k) {
        const auto gen = tlspose::testing::random_instance(g, 3 + static_cast<std::size_t>(k % 6), 1e-4);
        const auto sol = solve_pose(gen.noisy);
        const auto bf = oracle::brute_force_minimize(gen.noisy);
        EXPECT_LT(pose_distance(sol.pose, bf.pose), 1e-6) << k;
        EXPECT_LE(sol.final_cost, bf.cost * (1 + 1e-9) + 1e-15) << k;
    }
}

TEST(BruteForce, DetectsSignFlippedGaussNewton)
{
    Rng g(5);
    const auto gen = tlspose::testing::random_instance(g, 5, 1e-4);
    const Pose start = oracle::retract(gen.truth, (Vec6() << 0.05, -0.03, 0.04, 0, 0, 0).finished());
    const Pose broken = sign_flipped_solver(gen.noisy, start);
    const auto bf = oracle::brute_force_minimize(gen.noisy);
    EXPECT_GT(pose_distance(broken, bf.pose), 1e-3);
    EXPECT_GT(oracle::cost_direct(gen.noisy, broken), bf.cost);
}

TEST(FiniteDifferenceHessian, MatchesFisherInformationAtSmallNoise)
{
    Rng g(6);
    for (int k = 0; k < 10; ++k) {
        const auto gen = tlspose::testing::random_instance(g, 3 + static_cast<std::size_t>(k % 6), 1e-10);
        const auto sol = solve_pose(gen.noisy);
        const Mat6 h = oracle::finite_difference_hessian(gen.noisy, sol.pose);
        const Mat6 f = fim(gen.noisy, sol.pose.attitude);
        EXPECT_LT(rel_frob(h, f), 1e-4) << k;
    }
}

TEST(FiniteDifferenceHessian, SchurComplementIsReducedHessian)
{
    Rng g(7);
    const auto gen = tlspose::testing::random_instance(g, 6, 1e-10);
    const auto sol = solve_pose(gen.noisy);
    const Mat6 h = oracle::finite_difference_hessian(gen.noisy, sol.pose);
    const auto lin = linearize(sol.pose.attitude, gen.noisy);
    EXPECT_LT(rel_frob(h.topLeftCorner<3, 3>(), lin.f11), 1e-4);
    const Mat3 schur = h.topLeftCorner<3, 3>() - h.topRightCorner<3, 3>() * h.bottomRightCorner<3, 3>().inverse() * h.bottomLeftCorner<3, 3>();
    EXPECT_LT(rel_frob(schur, lin.hessian), 1e-4);
}

TEST(FiniteDifferenceHessian, SingleObservationIsRankDeficient)
{
    auto inst = simulation_instance();
    inst.observations.resize(1);
    const Mat6 h = oracle::finite_difference_hessian(inst, simulation_truth());
    Eigen::SelfAdjointEigenSolver<Mat6> eig(h);
    // One pair fixes only three of the six pose coordinates.
    EXPECT_LT(std::abs(eig.eigenvalues()(2)), 1e-6 * eig.eigenvalues()(5));
    EXPECT_GT(eig.eigenvalues()(3), 1e-3 * eig.eigenvalues()(5));
}

TEST(FiniteDifferenceGradient, VanishesAtSolution)
{
    Rng g(8);
    for (int k = 0; k < 10; ++k) {
        const auto gen = tlspose::testing::random_instance(g, 4, 1e-4);
        const auto sol = solve_pose(gen.noisy);
        const Vec6 grad = oracle::finite_difference_gradient(gen.noisy, sol.pose);
        const Vec6 grad_truth = oracle::finite_difference_gradient(gen.noisy, gen.truth);
        EXPECT_LT(grad.norm(), 1e-4 * grad_truth.norm()) << k;
    }
}
