// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tlspose/errors.hpp"
#include "tlspose/geometry.hpp"
#include "tlspose/model.hpp"
#include "tlspose/solver.hpp"

#include <Eigen/Eigenvalues>

#include <limits>
#include <optional>
#include <span>
#include <vector>

/// First-order error covariances of the TLS pose estimate and of the
/// observation estimates it implies. Everything is evaluated at a supplied
/// pose, normally the converged estimate.
namespace tlspose
{

using Mat36 = Eigen::Matrix<double, 3, 6>;

/// G_i = [A_i  -I], the Jacobian of e_i with respect to -(da, dp).
inline Mat36 residual_jacobian(const Mat3& cross)
{
    Mat36 g;
    g << cross, -Mat3::Identity();
    return g;
}

/// P_da = H^-1. Throws ObservabilityError for a singular H.
inline Mat3 attitude_covariance(const Mat3& hessian) { return invert_attitude_hessian(hessian); }

/// cov{p} = S + A_bar P_da A_bar^T.
inline Mat3 translation_covariance(const Mat3& s_lambda, const Mat3& a_bar, const Mat3& p_delta_alpha)
{
    return symmetrize(s_lambda + a_bar * p_delta_alpha * a_bar.transpose());
}

/// Fisher information of (da, dp): sum G_i^T Q_i^-1 G_i.
inline Mat6 fim(const Linearization& lin)
{
    Mat6 f = Mat6::Zero();
    for (std::size_t i = 0; i < lin.q_inv.size(); ++i) {
        const Mat36 g = residual_jacobian(lin.cross[i]);
        f += g.transpose() * lin.q_inv[i] * g;
    }
    return symmetrize(f);
}

inline Mat6 fim(const ProblemInstance& inst, const RotationMatrix& attitude) { return fim(linearize(attitude, inst)); }

namespace detail
{

// Inverse of a symmetric 6x6 information matrix after Jacobi scaling, so
// that attitude and translation units do not dominate the conditioning.
inline Mat6 invert_information(const Mat6& info)
{
    const Vec6 d = info.diagonal();
    if (!(d.minCoeff() > 0.0)) {
        throw ObservabilityError("information matrix has a non-positive diagonal", d.minCoeff());
    }
    const Vec6 scale = d.cwiseSqrt().cwiseInverse();
    const Mat6 scaled = symmetrize(scale.asDiagonal() * info * scale.asDiagonal());
    Eigen::SelfAdjointEigenSolver<Mat6> eig(scaled);
    const Vec6& lambda = eig.eigenvalues();
    if (eig.info() != Eigen::Success || !(lambda(0) > 0.0) || lambda(5) > kMaxConditionNumber * lambda(0)) {
        Vec3 null_dir = eig.eigenvectors().col(0).head<3>().cwiseProduct(scale.head<3>());
        std::optional<Vec3> dir;
        if (null_dir.norm() > 0.0) {
            dir = null_dir.normalized();
        }
        throw ObservabilityError("information matrix is singular; pose is not observable", lambda(0), dir);
    }
    const Mat6& v = eig.eigenvectors();
    const Mat6 inv_scaled = v * lambda.cwiseInverse().asDiagonal() * v.transpose();
    return symmetrize(scale.asDiagonal() * inv_scaled * scale.asDiagonal());
}

} // namespace detail

/// P_f = (sum G_i^T Q_i^-1 G_i)^-1, the joint covariance of (da, dp).
inline Mat6 joint_covariance(const ProblemInstance& inst, const RotationMatrix& attitude)
{
    return detail::invert_information(fim(inst, attitude));
}

struct ObservationEstimate
{
    Vec3 b_hat;
    Vec3 r_hat;
};

/// Corrected observation vectors; they satisfy b_hat = A r_hat - p exactly
/// (to rounding) at any pose.
inline std::vector<ObservationEstimate> estimate_observations(const ProblemInstance& inst, const Pose& pose)
{
    const Mat3& a = pose.attitude.matrix();
    std::vector<ObservationEstimate> out;
    out.reserve(inst.size());
    for (const auto& o : inst.observations) {
        const Mat3 q = compute_q_lambda(pose.attitude, o.noise);
        const Vec3 e = o.b_tilde - a * o.r_tilde + pose.translation;
        const Vec3 l = Eigen::LLT<Mat3>(q).solve(e);
        out.push_back({o.b_tilde + (o.noise.cov_rb.transpose() * a.transpose() - o.noise.cov_b) * l,
                       o.r_tilde + (o.noise.cov_r * a.transpose() - o.noise.cov_rb) * l});
    }
    return out;
}

/// Gain matrices mapping the linearized residual onto the b and r corrections.
struct ObservationGains
{
    Mat3 c; ///< (R_rb^T A^T - R_b) Q^-1
    Mat3 d; ///< (R_r A^T - R_rb) Q^-1
};

inline ObservationGains observation_gains(const RotationMatrix& attitude, const NoiseModel& noise, const Mat3& q_inv)
{
    const Mat3& a = attitude.matrix();
    return {(noise.cov_rb.transpose() * a.transpose() - noise.cov_b) * q_inv, (noise.cov_r * a.transpose() - noise.cov_rb) * q_inv};
}

struct ResidualCovariance
{
    Mat3 cov_res_b; ///< cov(b_hat - b_tilde)
    Mat3 cov_res_r; ///< cov(r_hat - r_tilde)
};

/// cov(b_hat - b_tilde) = C (Q - G P_f G^T) C^T and the D analogue for r.
inline std::vector<ResidualCovariance> residual_covariances(const ProblemInstance& inst, const Pose& pose, const Mat6& p_f)
{
    const Linearization lin = linearize(pose.attitude, inst);
    std::vector<ResidualCovariance> out;
    out.reserve(inst.size());
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto gains = observation_gains(pose.attitude, inst.observations[i].noise, lin.q_inv[i]);
        const Mat36 g = residual_jacobian(lin.cross[i]);
        const Mat3 core = lin.q[i] - g * p_f * g.transpose();
        out.push_back({symmetrize(gains.c * core * gains.c.transpose()), symmetrize(gains.d * core * gains.d.transpose())});
    }
    return out;
}

struct EstimateCovariance
{
    Mat3 p_b; ///< cov(b_hat - b)
    Mat3 p_r; ///< cov(r_hat - r)
};

/**
 * Covariances of the corrected observation vectors about the truth:
 *
 *   P_b = R_b + cov(b_hat - b_tilde) + C (I - G P_f G^T Q^-1) N_b + (...)^T
 *   P_r = R_r + cov(r_hat - r_tilde) + D (I - G P_f G^T Q^-1) N_r + (...)^T
 *
 * with N_b = E{da db^T} = R_b - A R_rb and N_r = E{da dr^T} = R_rb^T - A R_r,
 * where da = db - A dr.
 */
inline std::vector<EstimateCovariance> estimate_covariances(const ProblemInstance& inst, const Pose& pose, const Mat6& p_f)
{
    const Linearization lin = linearize(pose.attitude, inst);
    const auto residuals = residual_covariances(inst, pose, p_f);
    const Mat3& a = pose.attitude.matrix();
    std::vector<EstimateCovariance> out;
    out.reserve(inst.size());
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const NoiseModel& n = inst.observations[i].noise;
        const auto gains = observation_gains(pose.attitude, n, lin.q_inv[i]);
        const Mat36 g = residual_jacobian(lin.cross[i]);
        const Mat3 shrink = Mat3::Identity() - g * p_f * g.transpose() * lin.q_inv[i];
        const Mat3 cross_b = gains.c * shrink * (n.cov_b - a * n.cov_rb);
        const Mat3 cross_r = gains.d * shrink * (n.cov_rb.transpose() - a * n.cov_r);
        out.push_back({symmetrize(n.cov_b + residuals[i].cov_res_b + cross_b + cross_b.transpose()),
                       symmetrize(n.cov_r + residuals[i].cov_res_r + cross_r + cross_r.transpose())});
    }
    return out;
}

/// E{da da_i^T} with da_i = db_i - A dr_i: the rows of P_f for the attitude
/// times G_i^T. Equals -H^-1 (A_i + A_bar^T).
inline Mat3 attitude_innovation_cross_covariance(const Linearization& lin, const Mat6& p_f, std::size_t i)
{
    return p_f.topRows<3>() * residual_jacobian(lin.cross[i]).transpose();
}

struct PerObservationAnalytics
{
    Vec3 b_hat;
    Vec3 r_hat;
    Mat3 cov_res_b;
    Mat3 cov_res_r;
    Mat3 p_b;
    Mat3 p_r;
    Mat3 c;
    Mat3 d;
};

struct AnalyticsReport
{
    Mat3 p_delta_alpha; ///< rad^2
    Mat3 cov_p;         ///< m^2
    Mat6 p_f;
    Mat3 a_bar;
    Mat3 s_lambda;
    Mat3 hessian;
    Mat6 fim;
    std::vector<PerObservationAnalytics> per_observation;
};

/// Full covariance suite at `pose`. Throws ObservabilityError if the pose is
/// not observable.
inline AnalyticsReport analyze(const ProblemInstance& inst, const Pose& pose)
{
    const Linearization lin = linearize(pose.attitude, inst);
    AnalyticsReport rep;
    rep.hessian = lin.hessian;
    rep.s_lambda = lin.s_lambda;
    rep.a_bar = lin.a_bar;
    rep.p_delta_alpha = attitude_covariance(lin.hessian);
    rep.cov_p = translation_covariance(lin.s_lambda, lin.a_bar, rep.p_delta_alpha);
    rep.fim = fim(lin);
    rep.p_f = detail::invert_information(rep.fim);

    const auto est = estimate_observations(inst, pose);
    const auto res = residual_covariances(inst, pose, rep.p_f);
    const auto cov = estimate_covariances(inst, pose, rep.p_f);
    rep.per_observation.reserve(inst.size());
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto gains = observation_gains(pose.attitude, inst.observations[i].noise, lin.q_inv[i]);
        rep.per_observation.push_back({est[i].b_hat, est[i].r_hat, res[i].cov_res_b, res[i].cov_res_r, cov[i].p_b, cov[i].p_r,
                                       gains.c, gains.d});
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Isotropic closed forms
// ---------------------------------------------------------------------------

struct IsotropicObservation
{
    Vec3 b_hat;
    Vec3 r_hat;
    Mat3 cov_res_b;
    Mat3 cov_res_r;
    Mat3 p_b;
    Mat3 p_r;
};

struct IsotropicReport
{
    Mat3 q_bar;         ///< sigma_bar^-2 I
    Mat3 p_delta_alpha; ///< [-sum w A_i^2 + sigma_bar^2 A_bar^2]^-1
    Mat3 cov_p;         ///< sigma_bar^-2 I - A_bar P_da A_bar
    Mat6 p_f;
    std::vector<IsotropicObservation> per_observation;
};

/**
 * Scalar-weight versions of the covariance suite for R_i = diag(s_r^2 I, s_b^2 I).
 *
 * With s_i^2 = s_r^2 + s_b^2 the weights are w_i = 1 / s_i^2, the
 * corrections are fractions s_b^2 / s_i^2 and s_r^2 / s_i^2 of the residual,
 * and the residual covariances scale with the squares of those fractions.
 */
inline IsotropicReport isotropic_closed_form(const ProblemInstance& inst, const Pose& pose, std::span<const double> sigmas_r,
                                             std::span<const double> sigmas_b)
{
    const std::size_t n = inst.size();
    if (sigmas_r.size() != n || sigmas_b.size() != n) {
        throw std::invalid_argument("isotropic_closed_form: sigma count does not match instance size");
    }
    const Mat3& a = pose.attitude.matrix();
    std::vector<double> var(n), w(n);
    std::vector<Mat3> cross(n);
    double w_sum = 0.0; // sigma_bar^2
    Mat3 weighted_cross = Mat3::Zero();
    Mat3 weighted_square = Mat3::Zero();
    Mat6 info = Mat6::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        var[i] = sigmas_r[i] * sigmas_r[i] + sigmas_b[i] * sigmas_b[i];
        w[i] = 1.0 / var[i];
        cross[i] = cross_matrix(a * inst.observations[i].r_tilde);
        w_sum += w[i];
        weighted_cross += w[i] * cross[i];
        weighted_square += w[i] * cross[i] * cross[i];
        Mat6 block;
        block << -cross[i] * cross[i], cross[i], cross[i].transpose(), Mat3::Identity();
        info += w[i] * block;
    }
    const Mat3 a_bar = weighted_cross / w_sum;

    IsotropicReport rep;
    rep.q_bar = Mat3::Identity() / w_sum;
    rep.p_delta_alpha = symmetrize(Mat3((-weighted_square + w_sum * a_bar * a_bar).inverse()));
    rep.cov_p = symmetrize(Mat3(Mat3::Identity() / w_sum - a_bar * rep.p_delta_alpha * a_bar));
    rep.p_f = symmetrize(Mat6(info.inverse()));

    for (std::size_t i = 0; i < n; ++i) {
        const auto& o = inst.observations[i];
        const double sb2 = sigmas_b[i] * sigmas_b[i];
        const double sr2 = sigmas_r[i] * sigmas_r[i];
        const Vec3 e = o.b_tilde - a * o.r_tilde + pose.translation;
        const Mat36 g = residual_jacobian(cross[i]);
        const Mat3 gpg = g * rep.p_f * g.transpose();
        const Mat3 core = var[i] * Mat3::Identity() - gpg;
        IsotropicObservation obs;
        obs.b_hat = o.b_tilde - sb2 / var[i] * e;
        obs.r_hat = o.r_tilde + sr2 / var[i] * a.transpose() * e;
        obs.cov_res_b = symmetrize(Mat3(sb2 * sb2 / (var[i] * var[i]) * core));
        obs.cov_res_r = symmetrize(Mat3(sr2 * sr2 / (var[i] * var[i]) * a.transpose() * core * a));
        obs.p_b = symmetrize(Mat3(sb2 * Mat3::Identity() + obs.cov_res_b - 2.0 * sb2 * sb2 / var[i] * Mat3::Identity() +
                                  2.0 * sb2 * sb2 / (var[i] * var[i]) * gpg));
        obs.p_r = symmetrize(Mat3(sr2 * Mat3::Identity() + obs.cov_res_r - 2.0 * sr2 * sr2 / var[i] * Mat3::Identity() +
                                  2.0 * sr2 * sr2 / (var[i] * var[i]) * a.transpose() * gpg * a));
        rep.per_observation.push_back(obs);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Observability
// ---------------------------------------------------------------------------

struct ObservabilityDiagnosis
{
    int rank_of_b = 0;
    Vec3 b_singular_values = Vec3::Zero();
    double smallest_h_eigenvalue = std::numeric_limits<double>::quiet_NaN();
    double largest_h_eigenvalue = std::numeric_limits<double>::quiet_NaN();
    std::optional<Vec3> null_direction;
    Pose initial_pose;

    bool observable() const { return rank_of_b >= 2 && !null_direction.has_value(); }
};

/**
 * Rank of the unit-weight attitude profile matrix and the spectrum of the
 * attitude Hessian at the unit-weight SVD pose. The null direction is
 * reported when H is numerically singular; for two observations it is
 * parallel to A (r_1 - r_2).
 */
inline ObservabilityDiagnosis observability_check(const ProblemInstance& inst)
{
    ObservabilityDiagnosis diag;
    if (inst.size() == 0) {
        return diag;
    }
    const std::vector<double> unit(inst.size(), 1.0);
    const SvdAttitude svd = weighted_svd_pose(inst, unit);
    diag.rank_of_b = svd.rank;
    diag.b_singular_values = svd.singular_values;
    diag.initial_pose = svd.pose;
    try {
        const Linearization lin = linearize(svd.pose.attitude, inst);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(lin.hessian);
        diag.smallest_h_eigenvalue = eig.eigenvalues()(0);
        diag.largest_h_eigenvalue = eig.eigenvalues()(2);
        if (!(eig.eigenvalues()(0) > 0.0) || eig.eigenvalues()(2) > kMaxConditionNumber * eig.eigenvalues()(0)) {
            diag.null_direction = eig.eigenvectors().col(0).normalized();
        }
    } catch (const NonSpdError&) {
        // Hessian undefined without valid weights; leave the spectrum as NaN.
    }
    return diag;
}

} // namespace tlspose
