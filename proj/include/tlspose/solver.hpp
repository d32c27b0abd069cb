// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tlspose/errors.hpp"
#include "tlspose/geometry.hpp"
#include "tlspose/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace tlspose
{

/// Condition number above which a symmetric solve is reported as a failure.
inline constexpr double kMaxConditionNumber = 1e12;

/**
 * Weight of one observation at attitude A:
 * Q = A R_r A^T - A R_rb - R_rb^T A^T + R_b, the covariance of b - A r under
 * the joint noise model. Throws NonSpdError if Q is not positive definite.
 */
inline Mat3 compute_q_lambda(const RotationMatrix& attitude, const NoiseModel& noise)
{
    const Mat3& a = attitude.matrix();
    const Mat3 q = symmetrize(a * noise.cov_r * a.transpose() - a * noise.cov_rb - noise.cov_rb.transpose() * a.transpose() +
                              noise.cov_b);
    Eigen::LLT<Mat3> llt(q);
    if (llt.info() != Eigen::Success || !(q.diagonal().minCoeff() > 0.0)) {
        throw NonSpdError("observation weight Q is not positive definite");
    }
    return q;
}

namespace detail
{

inline Mat3 spd_inverse(const Mat3& m, const char* what)
{
    Eigen::LLT<Mat3> llt(m);
    if (llt.info() != Eigen::Success) {
        throw NonSpdError(std::string(what) + " is not positive definite");
    }
    return symmetrize(llt.solve(Mat3::Identity()));
}

} // namespace detail

/// S = (sum_i Q_i^-1)^-1.
inline Mat3 compute_s_lambda(std::span<const Mat3> q_list)
{
    if (q_list.empty()) {
        throw std::invalid_argument("compute_s_lambda: empty weight list");
    }
    Mat3 info = Mat3::Zero();
    for (const auto& q : q_list) {
        info += detail::spd_inverse(q, "Q");
    }
    return detail::spd_inverse(info, "sum of Q inverses");
}

/// Weights Q_i for every observation at `attitude`.
inline std::vector<Mat3> compute_q_list(const RotationMatrix& attitude, const ProblemInstance& inst)
{
    std::vector<Mat3> q;
    q.reserve(inst.size());
    for (const auto& o : inst.observations) {
        q.push_back(compute_q_lambda(attitude, o.noise));
    }
    return q;
}

/// Optimal translation for a fixed attitude:
/// p = -S sum_i Q_i^-1 (b_i - A r_i).
inline Vec3 solve_translation(const RotationMatrix& attitude, const ProblemInstance& inst, std::span<const Mat3> q_list)
{
    if (q_list.size() != inst.size()) {
        throw std::invalid_argument("solve_translation: weight list does not match instance size");
    }
    Mat3 info = Mat3::Zero();
    Vec3 rhs = Vec3::Zero();
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto& o = inst.observations[i];
        const Mat3 q_inv = detail::spd_inverse(q_list[i], "Q");
        info += q_inv;
        rhs += q_inv * (o.b_tilde - attitude * o.r_tilde);
    }
    return -detail::spd_inverse(info, "sum of Q inverses") * rhs;
}

/// Weighted residual cost 1/2 sum e_i^T Q_i(A)^-1 e_i with e_i = b_i - A r_i + p.
inline double pose_cost(const RotationMatrix& attitude, const Vec3& translation, const ProblemInstance& inst)
{
    double cost = 0.0;
    for (const auto& o : inst.observations) {
        const Mat3 q = compute_q_lambda(attitude, o.noise);
        const Vec3 e = o.b_tilde - attitude * o.r_tilde + translation;
        cost += 0.5 * e.dot(Eigen::LLT<Mat3>(q).solve(e));
    }
    return cost;
}

/**
 * @brief First-order model of the problem around an attitude.
 *
 * All the sums that recur across the solver and the covariance analysis,
 * evaluated with A_i = [A r_i x] built from the measured reference vectors.
 */
struct Linearization
{
    std::vector<Mat3> q;     ///< Q_i
    std::vector<Mat3> q_inv; ///< Q_i^-1
    std::vector<Mat3> cross; ///< A_i = [A r_i x]
    Mat3 s_lambda;           ///< (sum Q_i^-1)^-1
    Mat3 q_inv_cross_sum;    ///< sum Q_i^-1 A_i
    Mat3 a_bar;              ///< S sum Q_i^-1 A_i
    Mat3 f11;                ///< sum A_i^T Q_i^-1 A_i
    Mat3 hessian;            ///< f11 - (sum Q^-1 A)^T S (sum Q^-1 A)
};

inline Linearization linearize(const RotationMatrix& attitude, const ProblemInstance& inst)
{
    Linearization lin;
    const std::size_t n = inst.size();
    lin.q.reserve(n);
    lin.q_inv.reserve(n);
    lin.cross.reserve(n);
    Mat3 info = Mat3::Zero();
    lin.q_inv_cross_sum.setZero();
    lin.f11.setZero();
    for (const auto& o : inst.observations) {
        lin.q.push_back(compute_q_lambda(attitude, o.noise));
        lin.q_inv.push_back(detail::spd_inverse(lin.q.back(), "Q"));
        lin.cross.push_back(cross_matrix(attitude * o.r_tilde));
        const Mat3& qi = lin.q_inv.back();
        const Mat3& ai = lin.cross.back();
        info += qi;
        lin.q_inv_cross_sum += qi * ai;
        lin.f11 += ai.transpose() * qi * ai;
    }
    lin.s_lambda = detail::spd_inverse(info, "sum of Q inverses");
    lin.a_bar = lin.s_lambda * lin.q_inv_cross_sum;
    lin.hessian = symmetrize(lin.f11 - lin.q_inv_cross_sum.transpose() * lin.s_lambda * lin.q_inv_cross_sum);
    return lin;
}

/**
 * Inverse of the reduced attitude Hessian.
 *
 * Throws ObservabilityError carrying the eigenvector of the smallest
 * eigenvalue when H is indefinite or its condition number exceeds 1e12.
 */
inline Mat3 invert_attitude_hessian(const Mat3& hessian)
{
    Eigen::SelfAdjointEigenSolver<Mat3> eig(symmetrize(hessian));
    const Vec3& lambda = eig.eigenvalues();
    if (eig.info() != Eigen::Success || !(lambda(0) > 0.0) || lambda(2) > kMaxConditionNumber * lambda(0)) {
        const Vec3 null_dir = eig.eigenvectors().col(0).normalized();
        throw ObservabilityError("attitude Hessian is singular (smallest eigenvalue " + std::to_string(lambda(0)) +
                                     ", largest " + std::to_string(lambda(2)) + "); attitude is not observable",
                                 lambda(0), null_dir);
    }
    const Mat3& v = eig.eigenvectors();
    return symmetrize(v * lambda.cwiseInverse().asDiagonal() * v.transpose());
}

struct GaussNewtonStep
{
    Vec3 delta_alpha; ///< apply as A <- exp(-[da x]) A
    Vec3 gradient;    ///< reduced gradient of the attitude-only cost
    Mat3 hessian;     ///< reduced (Schur complement) Gauss-Newton Hessian
};

/**
 * One attitude step at (A, p).
 *
 * The gradient is exact: besides the residual term -sum A_i^T Q_i^-1 e_i it
 * carries the derivative of the attitude-dependent weights,
 * sum (M_i l_i) x l_i with l_i = Q_i^-1 e_i and M_i = A R_r A^T - A R_rb.
 * The translation is eliminated through the Schur complement, so the step is
 * the attitude part of a joint Gauss-Newton step from any p.
 */
inline GaussNewtonStep gauss_newton_step(const RotationMatrix& attitude, const Vec3& translation, const ProblemInstance& inst)
{
    const Linearization lin = linearize(attitude, inst);
    const Mat3& a = attitude.matrix();
    Vec3 grad_alpha = Vec3::Zero();
    Vec3 grad_p = Vec3::Zero();
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto& o = inst.observations[i];
        const Vec3 e = o.b_tilde - a * o.r_tilde + translation;
        const Vec3 l = lin.q_inv[i] * e;
        const Mat3 m = a * o.noise.cov_r * a.transpose() - a * o.noise.cov_rb;
        grad_alpha += -lin.cross[i].transpose() * l + (m * l).cross(l);
        grad_p += l;
    }
    const Vec3 g = grad_alpha + lin.q_inv_cross_sum.transpose() * lin.s_lambda * grad_p;
    const Mat3 h_inv = invert_attitude_hessian(lin.hessian);
    return GaussNewtonStep{-h_inv * g, g, lin.hessian};
}

// ---------------------------------------------------------------------------
// Isotropic closed form
// ---------------------------------------------------------------------------

/// B = sum w_i (b_i - b_bar)(r_i - r_bar)^T with weighted means b_bar, r_bar.
inline Mat3 attitude_profile_matrix(const ProblemInstance& inst, std::span<const double> weights, Vec3* r_bar = nullptr,
                                    Vec3* b_bar = nullptr)
{
    if (weights.size() != inst.size()) {
        throw std::invalid_argument("attitude_profile_matrix: weight count does not match instance size");
    }
    double wsum = 0.0;
    Vec3 rb = Vec3::Zero(), bb = Vec3::Zero();
    for (std::size_t i = 0; i < inst.size(); ++i) {
        wsum += weights[i];
        rb += weights[i] * inst.observations[i].r_tilde;
        bb += weights[i] * inst.observations[i].b_tilde;
    }
    rb /= wsum;
    bb /= wsum;
    Mat3 b = Mat3::Zero();
    for (std::size_t i = 0; i < inst.size(); ++i) {
        b += weights[i] * (inst.observations[i].b_tilde - bb) * (inst.observations[i].r_tilde - rb).transpose();
    }
    if (r_bar) {
        *r_bar = rb;
    }
    if (b_bar) {
        *b_bar = bb;
    }
    return b;
}

/// Number of singular values above kRankRelativeTolerance times the largest.
inline int numerical_rank(const Vec3& singular_values)
{
    if (!(singular_values(0) > 0.0)) {
        return 0;
    }
    int rank = 0;
    for (int k = 0; k < 3; ++k) {
        rank += singular_values(k) > kRankRelativeTolerance * singular_values(0) ? 1 : 0;
    }
    return rank;
}

struct SvdAttitude
{
    Pose pose;
    Vec3 singular_values;
    int rank;
};

/// Weighted SVD solution: A = U diag(1, 1, det U det V) V^T, p = A r_bar - b_bar.
/// Always returns a proper rotation, unique only when rank >= 2.
inline SvdAttitude weighted_svd_pose(const ProblemInstance& inst, std::span<const double> weights)
{
    Vec3 r_bar, b_bar;
    const Mat3 b = attitude_profile_matrix(inst, weights, &r_bar, &b_bar);
    Eigen::JacobiSVD<Mat3> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3& u = svd.matrixU();
    const Mat3& v = svd.matrixV();
    const Vec3 d(1.0, 1.0, u.determinant() * v.determinant());
    const RotationMatrix a = RotationMatrix::project(u * d.asDiagonal() * v.transpose());
    return SvdAttitude{Pose{a, a * r_bar - b_bar}, svd.singularValues(), numerical_rank(svd.singularValues())};
}

// ---------------------------------------------------------------------------
// Iterative solver
// ---------------------------------------------------------------------------

enum class InitializationMode
{
    IdentityWeightsSvd,
    ProvidedPose,
};

struct SolverConfig
{
    int max_iterations = 50;
    double step_tolerance = 1e-10; // rad on |da|, m on |dp|
    double cost_tolerance = 1e-12; // relative
    InitializationMode initialization = InitializationMode::IdentityWeightsSvd;
    std::optional<Pose> initial_pose;
    int max_step_halvings = 10;
};

struct StepRecord
{
    double attitude_step; // |da| actually applied, rad
    double translation_step; // |dp|, m
    double cost;             // after the step
};

struct PoseSolution
{
    Pose pose;
    double final_cost = 0.0;
    double initial_cost = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<StepRecord> steps;
};

/**
 * @brief Minimizes the weighted TLS pose cost with fully populated noise.
 *
 * Block-coordinate Gauss-Newton on SO(3): at each iterate the weights are
 * re-evaluated, the translation is set to its closed-form optimum, and the
 * attitude takes a step -H^-1 g through the exponential map. Steps that raise
 * the cost are halved up to `max_step_halvings` times.
 *
 * Throws ObservabilityError when the attitude Hessian is singular and
 * NonSpdError for invalid noise. Running out of iterations is not an error:
 * the best iterate is returned with converged = false.
 */
inline PoseSolution solve_pose(const ProblemInstance& inst, const SolverConfig& config = {})
{
    if (config.max_iterations < 1 || !(config.step_tolerance > 0.0) || !(config.cost_tolerance > 0.0)) {
        throw std::invalid_argument("solve_pose: invalid solver configuration");
    }
    if (inst.size() == 0) {
        throw ObservabilityError("no observations", 0.0);
    }

    RotationMatrix attitude;
    if (config.initialization == InitializationMode::ProvidedPose) {
        if (!config.initial_pose) {
            throw std::invalid_argument("solve_pose: provided-pose initialization without a pose");
        }
        attitude = config.initial_pose->attitude;
    } else {
        const std::vector<double> unit(inst.size(), 1.0);
        attitude = weighted_svd_pose(inst, unit).pose.attitude;
    }

    auto translation_at = [&](const RotationMatrix& a) {
        const auto q = compute_q_list(a, inst);
        return solve_translation(a, inst, q);
    };

    Vec3 translation = translation_at(attitude);
    double cost = pose_cost(attitude, translation, inst);

    PoseSolution sol;
    sol.initial_cost = cost;
    for (int it = 0; it < config.max_iterations; ++it) {
        const GaussNewtonStep step = gauss_newton_step(attitude, translation, inst);
        const bool small = step.delta_alpha.norm() < config.step_tolerance;

        double scale = 1.0;
        bool accepted = false;
        RotationMatrix trial_attitude = attitude;
        Vec3 trial_translation = translation;
        double trial_cost = cost;
        for (int h = 0; h <= config.max_step_halvings; ++h, scale *= 0.5) {
            trial_attitude = small_rotation_update(scale * step.delta_alpha, attitude);
            trial_translation = translation_at(trial_attitude);
            trial_cost = pose_cost(trial_attitude, trial_translation, inst);
            if (trial_cost <= cost + config.cost_tolerance * std::max(std::abs(cost), 1e-300)) {
                accepted = true;
                break;
            }
        }
        sol.iterations = it + 1;
        if (!accepted) {
            // Roundoff floor: a sub-tolerance step that cannot lower the cost is convergence.
            sol.converged = small;
            break;
        }

        const double dp = (trial_translation - translation).norm();
        sol.steps.push_back({scale * step.delta_alpha.norm(), dp, trial_cost});
        attitude = trial_attitude;
        translation = trial_translation;
        cost = trial_cost;
        if (scale * step.delta_alpha.norm() < config.step_tolerance && dp < config.step_tolerance) {
            sol.converged = true;
            break;
        }
    }
    sol.pose = Pose{attitude, translation};
    sol.final_cost = cost;
    return sol;
}

/**
 * Closed-form solution for isotropic noise: R_i = diag(s_r^2 I, s_b^2 I).
 *
 * The weights are Q_i = (s_r^2 + s_b^2) I for every attitude, so the cost
 * reduces to a weighted Wahba problem solved by one SVD. Throws
 * RankDeficientError when the attitude profile matrix has rank < 2.
 */
inline PoseSolution solve_isotropic(const ProblemInstance& inst, std::span<const double> sigmas_r,
                                    std::span<const double> sigmas_b)
{
    if (sigmas_r.size() != inst.size() || sigmas_b.size() != inst.size()) {
        throw std::invalid_argument("solve_isotropic: sigma count does not match instance size");
    }
    std::vector<double> weights(inst.size());
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const double var = sigmas_r[i] * sigmas_r[i] + sigmas_b[i] * sigmas_b[i];
        if (!(var > 0.0)) {
            throw NonSpdError("isotropic noise requires positive total variance");
        }
        weights[i] = 1.0 / var;
    }
    const SvdAttitude svd = weighted_svd_pose(inst, weights);
    if (svd.rank < 2) {
        throw RankDeficientError("attitude profile matrix has rank " + std::to_string(svd.rank) +
                                     "; at least three nonparallel vectors are required",
                                 svd.rank);
    }
    PoseSolution sol;
    sol.pose = svd.pose;
    double cost = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto& o = inst.observations[i];
        cost += 0.5 * weights[i] * (o.b_tilde - sol.pose.attitude * o.r_tilde + sol.pose.translation).squaredNorm();
    }
    sol.final_cost = cost;
    sol.initial_cost = cost;
    sol.converged = true;
    return sol;
}

} // namespace tlspose
