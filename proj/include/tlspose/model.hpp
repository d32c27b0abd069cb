// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tlspose/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace tlspose
{

/**
 * @brief Joint Gaussian noise on one observation pair, in m^2.
 *
 * The stacked error (dr, db) has covariance [[cov_r, cov_rb], [cov_rb^T, cov_b]]
 * with cov_rb = E{dr db^T}.
 */
struct NoiseModel
{
    Mat3 cov_r = Mat3::Identity();
    Mat3 cov_b = Mat3::Identity();
    Mat3 cov_rb = Mat3::Zero();

    static NoiseModel from_joint(const Mat6& joint)
    {
        return NoiseModel{joint.topLeftCorner<3, 3>(), joint.bottomRightCorner<3, 3>(), joint.topRightCorner<3, 3>()};
    }

    static NoiseModel isotropic(double sigma_r, double sigma_b)
    {
        return NoiseModel{sigma_r * sigma_r * Mat3::Identity(), sigma_b * sigma_b * Mat3::Identity(), Mat3::Zero()};
    }

    Mat6 joint() const
    {
        Mat6 j;
        j << cov_r, cov_rb, cov_rb.transpose(), cov_b;
        return j;
    }
};

struct ObservationPair
{
    Vec3 r_tilde = Vec3::Zero(); // reference frame, m
    Vec3 b_tilde = Vec3::Zero(); // body frame, m
    NoiseModel noise;
};

struct ProblemInstance
{
    std::vector<ObservationPair> observations;

    std::size_t size() const noexcept { return observations.size(); }
};

struct Pose
{
    RotationMatrix attitude;
    Vec3 translation = Vec3::Zero(); // m
};

enum class ViolationKind
{
    TooFewObservations,
    NonFinite,
    AsymmetricNoise,
    NonSpdNoise,
    CollinearReferences,
};

struct Violation
{
    ViolationKind kind;
    std::optional<std::size_t> observation;
    std::string message;
};

struct ValidationReport
{
    std::vector<Violation> violations;

    bool ok() const noexcept { return violations.empty(); }

    bool has(ViolationKind kind) const
    {
        for (const auto& v : violations) {
            if (v.kind == kind) {
                return true;
            }
        }
        return false;
    }

    /// True when a violation means the pose is not observable (as opposed to a
    /// malformed noise model).
    bool observability_violated() const
    {
        return has(ViolationKind::TooFewObservations) || has(ViolationKind::CollinearReferences);
    }
};

/// Smallest eigenvalue of the 6x6 joint covariance must exceed this fraction of its trace.
inline constexpr double kSpdRelativeTolerance = 1e-15;
/// Second singular value of the centered reference set must exceed this fraction of the first.
inline constexpr double kRankRelativeTolerance = 1e-9;

inline bool noise_is_symmetric(const NoiseModel& n)
{
    const double scale = std::max({n.cov_r.cwiseAbs().maxCoeff(), n.cov_b.cwiseAbs().maxCoeff(), 1e-300});
    return (n.cov_r - n.cov_r.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale &&
           (n.cov_b - n.cov_b.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

inline bool noise_is_spd(const NoiseModel& n)
{
    const Mat6 joint = symmetrize(n.joint());
    Eigen::SelfAdjointEigenSolver<Mat6> eig(joint, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
        return false;
    }
    return eig.eigenvalues()(0) > kSpdRelativeTolerance * joint.trace();
}

/// Singular values of the centered (unweighted) reference vector set, descending.
inline Vec3 centered_reference_singular_values(const ProblemInstance& inst)
{
    const auto n = static_cast<Eigen::Index>(inst.size());
    if (n == 0) {
        return Vec3::Zero();
    }
    Eigen::MatrixXd centered(n, 3);
    Vec3 mean = Vec3::Zero();
    for (const auto& o : inst.observations) {
        mean += o.r_tilde;
    }
    mean /= static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        centered.row(i) = (inst.observations[static_cast<std::size_t>(i)].r_tilde - mean).transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    Vec3 s = Vec3::Zero();
    s.head(svd.singularValues().size()) = svd.singularValues();
    return s;
}

/// Lists every precondition the solvers rely on that `inst` violates. Never throws.
inline ValidationReport validate_instance(const ProblemInstance& inst)
{
    ValidationReport report;
    if (inst.size() < 3) {
        report.violations.push_back({ViolationKind::TooFewObservations, std::nullopt,
                                     "need at least 3 observation pairs, got " + std::to_string(inst.size())});
    }
    bool finite = true;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto& o = inst.observations[i];
        if (!o.r_tilde.allFinite() || !o.b_tilde.allFinite() || !o.noise.joint().allFinite()) {
            report.violations.push_back({ViolationKind::NonFinite, i, "non-finite value in observation"});
            finite = false;
            continue;
        }
        if (!noise_is_symmetric(o.noise)) {
            report.violations.push_back({ViolationKind::AsymmetricNoise, i, "R_r or R_b is not symmetric"});
        }
        if (!noise_is_spd(o.noise)) {
            report.violations.push_back({ViolationKind::NonSpdNoise, i, "joint 6x6 covariance is not positive definite"});
        }
    }
    if (finite && inst.size() >= 2) {
        const Vec3 s = centered_reference_singular_values(inst);
        if (!(s(0) > 0.0) || s(1) <= kRankRelativeTolerance * s(0)) {
            report.violations.push_back({ViolationKind::CollinearReferences, std::nullopt,
                                         "reference vectors are collinear; at least three nonparallel vectors are required"});
        }
    }
    return report;
}

/// r_i = A^T (b_i + p), so that b_i = A r_i - p holds exactly.
inline std::vector<Vec3> synthesize_reference_vectors(const Pose& truth, const std::vector<Vec3>& body)
{
    std::vector<Vec3> refs;
    refs.reserve(body.size());
    for (const auto& b : body) {
        refs.push_back(truth.attitude.matrix().transpose() * (b + truth.translation));
    }
    return refs;
}

/// b_i = A r_i - p.
inline std::vector<Vec3> forward_body_vectors(const Pose& pose, const std::vector<Vec3>& refs)
{
    std::vector<Vec3> body;
    body.reserve(refs.size());
    for (const auto& r : refs) {
        body.push_back(pose.attitude * r - pose.translation);
    }
    return body;
}

} // namespace tlspose
