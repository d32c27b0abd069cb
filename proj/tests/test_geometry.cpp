// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#include "test_support.hpp"
#include "tlspose/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace tlspose;
using tlspose::testing::Rng;

namespace
{

constexpr double kPi = std::numbers::pi;

Mat3 elementary(int axis, double angle)
{
    const double c = std::cos(angle), s = std::sin(angle);
    Mat3 m = Mat3::Identity();
    const int i = (axis + 1) % 3, j = (axis + 2) % 3;
    m(i, i) = c;
    m(j, j) = c;
    m(i, j) = s;
    m(j, i) = -s;
    return m;
}

} // namespace

TEST(CrossMatrix, UnitXLayout)
{
    Mat3 expected;
    expected << 0, 0, 0, 0, 0, -1, 0, 1, 0;
    EXPECT_EQ(cross_matrix(Vec3::UnitX()), expected);
}

TEST(CrossMatrix, ZeroVectorGivesZeroMatrix) { EXPECT_EQ(cross_matrix(Vec3::Zero()), Mat3::Zero()); }

TEST(CrossMatrix, MatchesComponentCrossProductAndIsSkew)
{
    Rng g(11);
    for (int k = 0; k < 100; ++k) {
        const Vec3 a = tlspose::testing::normal_vec(g);
        const Vec3 b = tlspose::testing::normal_vec(g);
        const Vec3 direct(a.y() * b.z() - a.z() * b.y(), a.z() * b.x() - a.x() * b.z(), a.x() * b.y() - a.y() * b.x());
        EXPECT_LT((cross_matrix(a) * b - direct).norm(), 1e-14 * (1.0 + direct.norm()));
        EXPECT_EQ(cross_matrix(a).transpose(), -cross_matrix(a));
    }
}

TEST(RotationMatrixType, RejectsNonOrthogonalAndReflections)
{
    EXPECT_THROW(RotationMatrix::from_matrix(2.0 * Mat3::Identity()), std::invalid_argument);
    Mat3 reflection = Mat3::Identity();
    reflection(2, 2) = -1.0;
    EXPECT_THROW(RotationMatrix::from_matrix(reflection), std::invalid_argument);
    EXPECT_NO_THROW(RotationMatrix::from_matrix(elementary(2, 0.3)));
}

TEST(RotationMatrixType, ProjectionIsProper)
{
    Rng g(3);
    for (int k = 0; k < 50; ++k) {
        Mat3 m = Mat3::Random();
        const RotationMatrix r = RotationMatrix::project(m);
        EXPECT_LT(RotationMatrix::orthogonality_residual(r.matrix()), 1e-13);
        EXPECT_NEAR(r.matrix().determinant(), 1.0, 1e-13);
    }
}

TEST(SmallRotationUpdate, ZeroStepIsIdentity)
{
    EXPECT_LT((small_rotation_update(Vec3::Zero(), RotationMatrix()).matrix() - Mat3::Identity()).norm(), 1e-15);
}

TEST(SmallRotationUpdate, QuarterTurnAboutZ)
{
    // exp(-[a x]) with a = (0, 0, pi/2) rotates vectors by -90 degrees about z.
    const Mat3 expected = Eigen::AngleAxisd(-kPi / 2, Vec3::UnitZ()).toRotationMatrix();
    const Mat3 got = small_rotation_update(Vec3(0, 0, kPi / 2), RotationMatrix()).matrix();
    EXPECT_LT((got - expected).norm(), 1e-14);
    EXPECT_LT((got * Vec3::UnitX() - Vec3(0, -1, 0)).norm(), 1e-14);
}

TEST(SmallRotationUpdate, InverseStepRestoresAttitude)
{
    Rng g(5);
    for (int k = 0; k < 100; ++k) {
        const RotationMatrix a = tlspose::testing::random_rotation(g);
        const Vec3 d = 0.5 * tlspose::testing::normal_vec(g);
        const RotationMatrix back = small_rotation_update(-d, small_rotation_update(d, a));
        EXPECT_LT((back.matrix() - a.matrix()).norm(), 1e-12);
    }
}

TEST(SmallRotationUpdate, AlwaysReturnsProperRotation)
{
    Rng g(6);
    RotationMatrix a;
    for (int k = 0; k < 2000; ++k) {
        a = small_rotation_update(tlspose::testing::normal_vec(g), a);
        EXPECT_LT(RotationMatrix::orthogonality_residual(a.matrix()), 1e-12);
        EXPECT_NEAR(a.matrix().determinant(), 1.0, 1e-12);
    }
}

TEST(RotationLog, InvertsExponential)
{
    Rng g(8);
    for (int k = 0; k < 100; ++k) {
        Vec3 w = tlspose::testing::normal_vec(g);
        w *= tlspose::testing::uniform(g, 0.0, 3.0) / w.norm();
        EXPECT_LT((rotation_log(rotation_exp(w)) - w).norm(), 1e-12);
    }
}

TEST(AttitudeError, RecoversLeftMultiplicativePerturbation)
{
    Rng g(9);
    const RotationMatrix truth = tlspose::testing::random_rotation(g);
    const Vec3 da(1e-3, -2e-3, 5e-4);
    const RotationMatrix est = small_rotation_update(da, truth);
    EXPECT_LT((attitude_error(est, truth) - da).norm(), 1e-15);
}

TEST(VecKronApply, IdentityMatrix)
{
    const Eigen::VectorXd z = Eigen::Vector3d(1, 2, 3);
    EXPECT_LT((vec_kron_apply(Eigen::MatrixXd::Identity(3, 3), z) - z).norm(), 1e-15);
}

TEST(VecKronApply, MatchesExplicitKroneckerExpansion)
{
    Rng g(12);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd a(3, 4);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 4; ++j) {
                a(i, j) = tlspose::testing::normal(g);
            }
        }
        Eigen::VectorXd z(4);
        for (int j = 0; j < 4; ++j) {
            z(j) = tlspose::testing::normal(g);
        }
        // (z^T kron I_3) vec(A): block j of the row vector is z_j I_3, vec stacks columns.
        Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(3, 12);
        Eigen::VectorXd vec(12);
        for (int j = 0; j < 4; ++j) {
            kron.block(0, 3 * j, 3, 3) = z(j) * Eigen::Matrix3d::Identity();
            vec.segment(3 * j, 3) = a.col(j);
        }
        EXPECT_LT((vec_kron_apply(a, z) - kron * vec).norm(), 1e-12);
        EXPECT_LT((vec_kron_apply(a, z) - a * z).norm(), 1e-12);
    }
}

TEST(VecKronApply, ZeroMatrixAndMismatch)
{
    EXPECT_EQ(vec_kron_apply(Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Ones(4)), Eigen::VectorXd::Zero(3));
    EXPECT_THROW(vec_kron_apply(Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Ones(3)), std::invalid_argument);
}

TEST(Euler, IdentityIsZero)
{
    const EulerAngles e = attitude_to_euler(RotationMatrix());
    EXPECT_NEAR(e.roll, 0.0, 1e-14);
    EXPECT_NEAR(e.pitch, 0.0, 1e-14);
    EXPECT_NEAR(e.yaw, 0.0, 1e-14);
}

TEST(Euler, SingleAxisYaw)
{
    const RotationMatrix a = RotationMatrix::from_matrix(elementary(2, 10.0 * kPi / 180.0));
    const EulerAngles e = attitude_to_euler(a);
    EXPECT_NEAR(e.roll, 0.0, 1e-12);
    EXPECT_NEAR(e.pitch, 0.0, 1e-12);
    EXPECT_NEAR(e.yaw, 10.0, 1e-12);
    EXPECT_LT((euler_to_attitude({0.0, 0.0, 10.0}).matrix() - a.matrix()).norm(), 1e-15);
}

TEST(Euler, ZyxCompositionOrder)
{
    // A = R1(roll) R2(pitch) R3(yaw): yaw applied first.
    const Mat3 expected = elementary(0, 0.1) * elementary(1, -0.2) * elementary(2, 0.3);
    const EulerAngles e{0.1 * 180.0 / kPi, -0.2 * 180.0 / kPi, 0.3 * 180.0 / kPi};
    EXPECT_LT((euler_to_attitude(e).matrix() - expected).norm(), 1e-14);
}

TEST(Euler, RoundTripOfRandomRotations)
{
    Rng g(21);
    int checked = 0;
    while (checked < 500) {
        const RotationMatrix a = tlspose::testing::random_rotation(g);
        if (std::abs(a.matrix()(0, 2)) > 0.999) {
            continue;
        }
        const RotationMatrix back = euler_to_attitude(attitude_to_euler(a));
        EXPECT_LT((back.matrix() - a.matrix()).norm(), 1e-9);
        ++checked;
    }
}

TEST(Euler, GimbalLockIsReported)
{
    EXPECT_THROW(attitude_to_euler(euler_to_attitude({10.0, 90.0, 20.0})), DegenerateRepresentationError);
    EXPECT_THROW(attitude_to_euler(euler_to_attitude({0.0, -90.0, 0.0})), DegenerateRepresentationError);
    EXPECT_NO_THROW(attitude_to_euler(euler_to_attitude({0.0, 89.9, 0.0})));
}
