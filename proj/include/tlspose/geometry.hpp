// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tlspose/errors.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <stdexcept>

/// Small fixed-size linear algebra and SO(3) helpers shared by every module.
namespace tlspose
{

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/**
 * @brief Proper orthogonal 3x3 matrix.
 *
 * Maps reference-frame vectors into the body frame (b = A r - p). Instances
 * are either checked on construction or produced by operations that keep the
 * result on SO(3).
 */
class RotationMatrix
{
public:
    static constexpr double kTolerance = 1e-10;

    RotationMatrix()
        : m_(Mat3::Identity())
    {
    }

    static RotationMatrix identity() { return RotationMatrix(); }

    /// Throws std::invalid_argument unless `m` is orthogonal with det +1
    /// within `tol` (Frobenius norm of m^T m - I).
    static RotationMatrix from_matrix(const Mat3& m, double tol = kTolerance)
    {
        if (!m.allFinite()) {
            throw std::invalid_argument("rotation matrix has non-finite entries");
        }
        if (orthogonality_residual(m) > tol || std::abs(m.determinant() - 1.0) > tol) {
            throw std::invalid_argument("matrix is not a proper rotation");
        }
        return RotationMatrix(m);
    }

    /// Nearest rotation in the Frobenius sense (polar factor with det fix).
    static RotationMatrix project(const Mat3& m)
    {
        Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Mat3& u = svd.matrixU();
        const Mat3& v = svd.matrixV();
        Vec3 d(1.0, 1.0, (u.determinant() * v.determinant() < 0.0) ? -1.0 : 1.0);
        return RotationMatrix(u * d.asDiagonal() * v.transpose());
    }

    static double orthogonality_residual(const Mat3& m)
    {
        return (m.transpose() * m - Mat3::Identity()).norm();
    }

    const Mat3& matrix() const noexcept { return m_; }
    RotationMatrix transpose() const { return RotationMatrix(m_.transpose()); }

    friend RotationMatrix operator*(const RotationMatrix& a, const RotationMatrix& b)
    {
        return RotationMatrix(a.m_ * b.m_);
    }
    friend Vec3 operator*(const RotationMatrix& a, const Vec3& v) { return a.m_ * v; }

private:
    explicit RotationMatrix(const Mat3& m)
        : m_(m)
    {
    }

    Mat3 m_;
};

/// [a x]: the skew-symmetric matrix with [a x] b = a x b.
inline Mat3 cross_matrix(const Vec3& a)
{
    Mat3 m;
    // clang-format off
    m <<  0.0,  -a.z(),  a.y(),
          a.z(), 0.0,   -a.x(),
         -a.y(), a.x(),  0.0;
    // clang-format on
    return m;
}

/// exp([w x]) via Rodrigues' formula.
inline Mat3 rotation_exp(const Vec3& w)
{
    const double angle = w.norm();
    if (angle == 0.0) {
        return Mat3::Identity();
    }
    return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

/// Rotation vector w with exp([w x]) = R (angle in [0, pi]).
inline Vec3 rotation_log(const Mat3& r)
{
    const Eigen::AngleAxisd aa(r);
    return aa.angle() * aa.axis();
}

/// exp(-[delta_alpha x]) A, re-projected onto SO(3) when the result drifts by
/// more than 1e-12 from orthogonality.
inline RotationMatrix small_rotation_update(const Vec3& delta_alpha, const RotationMatrix& a)
{
    const Mat3 updated = rotation_exp(-delta_alpha) * a.matrix();
    if (RotationMatrix::orthogonality_residual(updated) > 1e-12) {
        return RotationMatrix::project(updated);
    }
    return RotationMatrix::from_matrix(updated, 1e-11);
}

/// Attitude error vector for an estimate relative to the truth, using the
/// left-multiplicative convention estimate = exp(-[da x]) truth.
inline Vec3 attitude_error(const RotationMatrix& estimate, const RotationMatrix& truth)
{
    return -rotation_log(estimate.matrix() * truth.matrix().transpose());
}

/// Rotation angle of a^T b in radians.
inline double geodesic_distance(const RotationMatrix& a, const RotationMatrix& b)
{
    return rotation_log(a.matrix().transpose() * b.matrix()).norm();
}

/// (z^T kron I_m) vec(A), with vec stacking the columns of A. Equal to A z;
/// kept as an explicit expansion for checking derivations.
inline Eigen::VectorXd vec_kron_apply(const Eigen::MatrixXd& a, const Eigen::VectorXd& z)
{
    if (a.cols() != z.size()) {
        throw std::invalid_argument("vec_kron_apply: A has " + std::to_string(a.cols()) +
                                    " columns but z has " + std::to_string(z.size()) + " entries");
    }
    const Eigen::Index m = a.rows();
    const Eigen::Index k = a.cols();
    Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(m, m * k);
    for (Eigen::Index j = 0; j < k; ++j) {
        kron.block(0, j * m, m, m) = z(j) * Eigen::MatrixXd::Identity(m, m);
    }
    const Eigen::VectorXd vec_a = a.reshaped(); // column-major
    return kron * vec_a;
}

/// Roll, pitch, yaw in degrees.
struct EulerAngles
{
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
};

namespace detail
{
inline double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
inline double rad(double deg) { return deg * std::numbers::pi / 180.0; }
} // namespace detail

// Intrinsic z-y-x (yaw, pitch, roll) sequence written as a direction cosine
// matrix: A = R1(roll) R2(pitch) R3(yaw) with Ri the elementary frame rotations.
inline RotationMatrix euler_to_attitude(const EulerAngles& e)
{
    const double cr = std::cos(detail::rad(e.roll)), sr = std::sin(detail::rad(e.roll));
    const double cp = std::cos(detail::rad(e.pitch)), sp = std::sin(detail::rad(e.pitch));
    const double cy = std::cos(detail::rad(e.yaw)), sy = std::sin(detail::rad(e.yaw));
    Mat3 r1, r2, r3;
    r1 << 1, 0, 0, 0, cr, sr, 0, -sr, cr;
    r2 << cp, 0, -sp, 0, 1, 0, sp, 0, cp;
    r3 << cy, sy, 0, -sy, cy, 0, 0, 0, 1;
    return RotationMatrix::project(r1 * r2 * r3);
}

inline EulerAngles attitude_to_euler(const RotationMatrix& attitude)
{
    const Mat3& a = attitude.matrix();
    const double pitch = -std::asin(std::clamp(a(0, 2), -1.0, 1.0));
    if (std::abs(detail::deg(pitch)) >= 90.0 - 1e-6) {
        throw DegenerateRepresentationError("pitch within 1e-6 deg of +/-90 deg; roll and yaw are not separable");
    }
    return EulerAngles{
        detail::deg(std::atan2(a(1, 2), a(2, 2))),
        detail::deg(pitch),
        detail::deg(std::atan2(a(0, 1), a(0, 0))),
    };
}

/// Symmetric part (M + M^T) / 2.
template <typename Derived>
inline auto symmetrize(const Eigen::MatrixBase<Derived>& m)
{
    using Plain = typename Derived::PlainObject;
    return Plain(0.5 * (m + m.transpose()));
}

/// ||a - b||_F / ||b||_F, falling back to the absolute difference when b = 0.
template <typename A, typename B>
inline double relative_frobenius(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b)
{
    const double denom = b.norm();
    const double diff = (a - b).norm();
    return denom > 0.0 ? diff / denom : diff;
}

} // namespace tlspose
