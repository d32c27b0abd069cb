// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Reference implementations for validating the solver and the covariance
// analysis. They share only the value types and SO(3) helpers with the
// production path; nothing in solver.hpp or analytics.hpp calls into here.

#include "tlspose/geometry.hpp"
#include "tlspose/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <vector>

namespace tlspose::oracle
{

/// J = 1/2 sum e_i^T Q_i(A)^-1 e_i evaluated term by term with explicit inverses.
inline double cost_direct(const ProblemInstance& inst, const Pose& pose)
{
    const Mat3& a = pose.attitude.matrix();
    double j = 0.0;
    for (const auto& o : inst.observations) {
        const Mat3& rr = o.noise.cov_r;
        const Mat3& rb = o.noise.cov_b;
        const Mat3& rrb = o.noise.cov_rb;
        const Mat3 q = a * rr * a.transpose() - a * rrb - rrb.transpose() * a.transpose() + rb;
        const Vec3 e = o.b_tilde - a * o.r_tilde + pose.translation;
        j += 0.5 * e.dot(q.inverse() * e);
    }
    return j;
}

/// Pose at local coordinates x = (da, dp) around `center`:
/// A = exp(-[da x]) A_c, p = p_c + dp.
inline Pose retract(const Pose& center, const Vec6& x)
{
    const Vec3 da = x.head<3>();
    const Mat3 a = rotation_exp(-da) * center.attitude.matrix();
    return Pose{RotationMatrix::project(a), center.translation + x.tail<3>()};
}

/// Central-difference Hessian of cost_direct in the local coordinates (da, dp).
inline Mat6 finite_difference_hessian(const ProblemInstance& inst, const Pose& pose, double step = 1e-5)
{
    auto f = [&](const Vec6& x) { return cost_direct(inst, retract(pose, x)); };
    const double f0 = f(Vec6::Zero());
    Mat6 h;
    for (int j = 0; j < 6; ++j) {
        Vec6 ej = Vec6::Zero();
        ej(j) = step;
        h(j, j) = (f(ej) - 2.0 * f0 + f(-ej)) / (step * step);
        for (int k = j + 1; k < 6; ++k) {
            Vec6 ek = Vec6::Zero();
            ek(k) = step;
            h(j, k) = (f(ej + ek) - f(ej - ek) - f(-ej + ek) + f(-ej - ek)) / (4.0 * step * step);
            h(k, j) = h(j, k);
        }
    }
    return h;
}

/// Central-difference gradient of cost_direct in (da, dp).
inline Vec6 finite_difference_gradient(const ProblemInstance& inst, const Pose& pose, double step = 1e-7)
{
    Vec6 g;
    for (int j = 0; j < 6; ++j) {
        Vec6 ej = Vec6::Zero();
        ej(j) = step;
        g(j) = (cost_direct(inst, retract(pose, ej)) - cost_direct(inst, retract(pose, -ej))) / (2.0 * step);
    }
    return g;
}

struct BruteForceResult
{
    Pose pose;
    double cost = std::numeric_limits<double>::infinity();
    int evaluations = 0;
};

namespace detail
{

// Nelder-Mead on a 6-vector. Stops when every vertex lies within `x_tol` of
// the best one or after `max_evals` evaluations.
template <typename F>
Vec6 nelder_mead(F&& f, const Vec6& start, double initial_step, double x_tol, int max_evals, int& evals, double& best_value)
{
    constexpr int n = 6;
    std::array<Vec6, n + 1> x;
    std::array<double, n + 1> fx;
    x[0] = start;
    for (int i = 0; i < n; ++i) {
        x[i + 1] = start;
        x[i + 1](i) += initial_step;
    }
    for (int i = 0; i <= n; ++i) {
        fx[i] = f(x[i]);
        ++evals;
    }
    std::array<int, n + 1> order;
    int local = n + 1;
    while (local < max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fx[a] < fx[b]; });
        const int best = order[0];
        const int worst = order[n];
        const int second = order[n - 1];

        double diameter = 0.0;
        for (int i = 0; i <= n; ++i) {
            diameter = std::max(diameter, (x[i] - x[best]).cwiseAbs().maxCoeff());
        }
        if (diameter < x_tol) {
            break;
        }

        Vec6 centroid = Vec6::Zero();
        for (int i = 0; i <= n; ++i) {
            if (i != worst) {
                centroid += x[i];
            }
        }
        centroid /= n;

        const Vec6 xr = centroid + (centroid - x[worst]);
        const double fr = f(xr);
        ++local;
        if (fr < fx[best]) {
            const Vec6 xe = centroid + 2.0 * (centroid - x[worst]);
            const double fe = f(xe);
            ++local;
            if (fe < fr) {
                x[worst] = xe;
                fx[worst] = fe;
            } else {
                x[worst] = xr;
                fx[worst] = fr;
            }
            continue;
        }
        if (fr < fx[second]) {
            x[worst] = xr;
            fx[worst] = fr;
            continue;
        }
        const bool outside = fr < fx[worst];
        const Vec6 xc = outside ? Vec6(centroid + 0.5 * (xr - centroid)) : Vec6(centroid + 0.5 * (x[worst] - centroid));
        const double fc = f(xc);
        ++local;
        if (fc < (outside ? fr : fx[worst])) {
            x[worst] = xc;
            fx[worst] = fc;
            continue;
        }
        for (int i = 0; i <= n; ++i) {
            if (i != best) {
                x[i] = x[best] + 0.5 * (x[i] - x[best]);
                fx[i] = f(x[i]);
                ++local;
            }
        }
    }
    evals += local - (n + 1);
    const auto it = std::min_element(fx.begin(), fx.end());
    best_value = *it;
    return x[static_cast<std::size_t>(it - fx.begin())];
}

// Unweighted Kabsch alignment, the common centre of the multi-start.
inline Pose kabsch(const ProblemInstance& inst)
{
    Vec3 rc = Vec3::Zero(), bc = Vec3::Zero();
    for (const auto& o : inst.observations) {
        rc += o.r_tilde;
        bc += o.b_tilde;
    }
    rc /= static_cast<double>(inst.size());
    bc /= static_cast<double>(inst.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& o : inst.observations) {
        cov += (o.b_tilde - bc) * (o.r_tilde - rc).transpose();
    }
    const RotationMatrix a = RotationMatrix::project(cov);
    return Pose{a, a * rc - bc};
}

} // namespace detail

/**
 * @brief Derivative-free minimization of cost_direct.
 *
 * Eight deterministic starts (the unweighted Kabsch pose and seven offsets of
 * 0.05 rad / 0.05 m around it), each refined by Nelder-Mead restarts in
 * exponential coordinates until a restart no longer improves the cost. The
 * lowest-cost result wins, ties going to the lower start index.
 */
inline BruteForceResult brute_force_minimize(const ProblemInstance& inst, double x_tol = 1e-12)
{
    const Pose center = detail::kabsch(inst);
    // clang-format off
    static constexpr std::array<std::array<double, 6>, 8> kOffsets{{
        { 0,  0,  0,  0,  0,  0},
        { 1,  1,  1,  1,  1,  1},
        {-1, -1, -1, -1, -1, -1},
        { 1, -1,  1, -1,  1, -1},
        {-1,  1, -1,  1, -1,  1},
        { 1,  1, -1, -1,  1,  1},
        {-1, -1,  1,  1, -1, -1},
        { 1, -1, -1,  1, -1,  1},
    }};
    // clang-format on

    BruteForceResult best;
    for (const auto& offset : kOffsets) {
        Pose pose = retract(center, 0.05 * Eigen::Map<const Vec6>(offset.data()));
        double value = cost_direct(inst, pose);
        int evals = 1;
        double step = 0.02;
        for (int restart = 0; restart < 40; ++restart) {
            double found = value;
            const Vec6 x = detail::nelder_mead([&](const Vec6& y) { return cost_direct(inst, retract(pose, y)); }, Vec6::Zero(),
                                               step, x_tol, 20000, evals, found);
            const bool improved = found < value;
            if (improved) {
                pose = retract(pose, x);
                value = found;
            }
            if (!improved || x.cwiseAbs().maxCoeff() < 10.0 * x_tol) {
                if (step <= 1e-9) {
                    break;
                }
            }
            step = std::max(1e-9, std::min(step * 0.1, std::max(1e3 * x.cwiseAbs().maxCoeff(), 1e-9)));
        }
        if (value < best.cost) {
            best.pose = pose;
            best.cost = value;
        }
        best.evaluations += evals;
    }
    return best;
}

} // namespace tlspose::oracle
