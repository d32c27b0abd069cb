// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tlspose/analytics.hpp"
#include "tlspose/errors.hpp"
#include "tlspose/geometry.hpp"
#include "tlspose/model.hpp"
#include "tlspose/solver.hpp"

#include <Eigen/Cholesky>

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace tlspose
{

/**
 * @brief Counter-based SplitMix64 stream.
 *
 * Output k of stream (seed, stream) is splitmix64 applied to a key mixed from
 * both ids plus k times the golden-ratio increment, so any sample can be
 * regenerated from (seed, index) alone. Normals use Box-Muller, which keeps
 * the draw count fixed and the output independent of the standard library.
 */
class CounterRng
{
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL)))
    {
    }

    std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

    /// Uniform in (0, 1].
    double uniform()
    {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(theta);
        has_spare_ = true;
        return radius * std::cos(theta);
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t mix(std::uint64_t z)
    {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

struct NoiseSample
{
    Vec3 delta_r;
    Vec3 delta_b;
};

/// (dr, db) ~ N(0, R) as L z with R = L L^T and z six unit normals.
inline NoiseSample sample_noise(const NoiseModel& noise, CounterRng& rng)
{
    Eigen::LLT<Mat6> llt(symmetrize(noise.joint()));
    if (llt.info() != Eigen::Success) {
        throw NonSpdError("noise covariance has no Cholesky factor");
    }
    Vec6 z;
    for (int k = 0; k < 6; ++k) {
        z(k) = rng.normal();
    }
    const Vec6 x = llt.matrixL() * z;
    return {x.head<3>(), x.tail<3>()};
}

/// Random SPD joint covariance scale * (M M^T / 6 + 1e-3 I), M with unit
/// normal entries. Not tied to any particular sensor.
inline NoiseModel random_spd_noise(double scale, CounterRng& rng)
{
    if (!(scale > 0.0)) {
        throw std::invalid_argument("random_spd_noise: scale must be positive");
    }
    Mat6 m;
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
            m(i, j) = rng.normal();
        }
    }
    const Mat6 r = scale * (m * m.transpose() / 6.0 + 1e-3 * Mat6::Identity());
    return NoiseModel::from_joint(symmetrize(r));
}

struct MonteCarloConfig
{
    std::size_t n_samples = 10000;
    std::uint64_t rng_seed = 0;
    Pose truth;
    ProblemInstance noiseless; ///< true r_i, b_i plus the noise models
    SolverConfig solver;
    bool keep_samples = false;
};

/// One scalar error coordinate and its analytic 3-sigma bound.
struct CoordinateCoverage
{
    std::string name;
    double sigma3 = 0.0;
    std::size_t inside = 0;
    double coverage = 0.0;
};

struct ObservationEmpirics
{
    Mat3 est_b = Mat3::Zero(); ///< sample cov of b_hat - b
    Mat3 est_r = Mat3::Zero(); ///< sample cov of r_hat - r
    Mat3 res_b = Mat3::Zero(); ///< sample cov of b_hat - b_tilde
    Mat3 res_r = Mat3::Zero(); ///< sample cov of r_hat - r_tilde
    Mat3 alpha_da = Mat3::Zero(); ///< sample cross-cov of (da, db - A dr)
};

struct MonteCarloReport
{
    std::uint64_t seed = 0;
    std::size_t n_samples = 0;
    std::size_t n_failed = 0;
    bool failed = false; ///< more than 1% of samples failed to solve

    AnalyticsReport analytic; ///< at the truth pose of the noiseless template
    std::vector<CoordinateCoverage> coordinates;

    Mat3 empirical_attitude = Mat3::Zero();
    Mat3 empirical_translation = Mat3::Zero();
    std::vector<ObservationEmpirics> observations;

    /// Sample indices of successful solves and, per coordinate, the error of
    /// each one. Filled only with keep_samples.
    std::vector<std::size_t> sample_indices;
    std::vector<std::vector<double>> errors;

    double min_coverage() const
    {
        double m = 1.0;
        for (const auto& c : coordinates) {
            m = std::min(m, c.coverage);
        }
        return m;
    }

    /// Every coordinate's 3-sigma coverage inside [lo, hi] and no run failure.
    bool calibrated(double lo = 0.990, double hi = 1.000) const
    {
        if (failed || coordinates.empty()) {
            return false;
        }
        for (const auto& c : coordinates) {
            if (c.coverage < lo || c.coverage > hi) {
                return false;
            }
        }
        return true;
    }
};

namespace detail
{

// Running second moments about the sample mean.
template <int N>
struct Moments
{
    using Vec = Eigen::Matrix<double, N, 1>;
    using Mat = Eigen::Matrix<double, N, N>;
    Vec sum = Vec::Zero();
    Mat outer = Mat::Zero();
    std::size_t count = 0;

    void add(const Vec& x)
    {
        sum += x;
        outer += x * x.transpose();
        ++count;
    }

    Mat covariance() const
    {
        if (count < 2) {
            return Mat::Zero();
        }
        const double n = static_cast<double>(count);
        const Vec mean = sum / n;
        return symmetrize(Mat((outer - n * mean * mean.transpose()) / (n - 1.0)));
    }
};

inline std::vector<std::string> coordinate_names(std::size_t n_obs)
{
    std::vector<std::string> names;
    const std::array<const char*, 3> axes{"x", "y", "z"};
    for (const char* ax : axes) {
        names.push_back(std::string("attitude_") + ax);
    }
    for (const char* ax : axes) {
        names.push_back(std::string("translation_") + ax);
    }
    for (std::size_t i = 0; i < n_obs; ++i) {
        const std::string id = std::to_string(i + 1);
        for (const char* kind : {"b", "r"}) {
            for (const char* what : {"estimate", "residual"}) {
                for (const char* ax : axes) {
                    names.push_back(std::string(kind) + id + "_" + what + "_" + ax);
                }
            }
        }
    }
    return names;
}

inline Vec3 sigma3(const Mat3& cov) { return 3.0 * cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

} // namespace detail

/**
 * @brief Perturbs the noiseless template n_samples times and checks the
 * analytic covariances against the spread of the estimates.
 *
 * Sample k draws its noise from CounterRng(seed, k), so the report depends
 * only on (seed, config). Samples whose solve throws or does not converge are
 * counted and excluded; more than 1% of them marks the run as failed.
 * Attitude errors use da = -log(A_hat A^T).
 */
inline MonteCarloReport run_monte_carlo(const MonteCarloConfig& config)
{
    if (config.n_samples < 1) {
        throw std::invalid_argument("run_monte_carlo: n_samples must be >= 1");
    }
    const ProblemInstance& tmpl = config.noiseless;
    const std::size_t n_obs = tmpl.size();
    const Mat3& a_true = config.truth.attitude.matrix();

    MonteCarloReport rep;
    rep.seed = config.rng_seed;
    rep.n_samples = config.n_samples;
    rep.analytic = analyze(tmpl, config.truth);

    const auto names = detail::coordinate_names(n_obs);
    std::vector<double> bounds;
    bounds.reserve(names.size());
    auto push_bounds = [&](const Mat3& cov) {
        const Vec3 s = detail::sigma3(cov);
        bounds.insert(bounds.end(), s.data(), s.data() + 3);
    };
    push_bounds(rep.analytic.p_delta_alpha);
    push_bounds(rep.analytic.cov_p);
    for (const auto& o : rep.analytic.per_observation) {
        push_bounds(o.p_b);
        push_bounds(o.cov_res_b);
        push_bounds(o.p_r);
        push_bounds(o.cov_res_r);
    }
    rep.coordinates.resize(names.size());
    for (std::size_t c = 0; c < names.size(); ++c) {
        rep.coordinates[c].name = names[c];
        rep.coordinates[c].sigma3 = bounds[c];
    }
    if (config.keep_samples) {
        rep.errors.assign(names.size(), {});
    }

    detail::Moments<3> att, trans;
    std::vector<std::array<detail::Moments<3>, 4>> obs_moments(n_obs);
    std::vector<Mat3> cross_sum(n_obs, Mat3::Zero());
    std::vector<Vec3> da_sum(n_obs, Vec3::Zero());
    Vec3 alpha_sum = Vec3::Zero();

    std::vector<double> row(names.size());
    ProblemInstance noisy = tmpl;
    std::vector<NoiseSample> noise(n_obs);
    for (std::size_t k = 0; k < config.n_samples; ++k) {
        CounterRng rng(config.rng_seed, k);
        for (std::size_t i = 0; i < n_obs; ++i) {
            noise[i] = sample_noise(tmpl.observations[i].noise, rng);
            noisy.observations[i].r_tilde = tmpl.observations[i].r_tilde + noise[i].delta_r;
            noisy.observations[i].b_tilde = tmpl.observations[i].b_tilde + noise[i].delta_b;
        }
        PoseSolution sol;
        try {
            sol = solve_pose(noisy, config.solver);
        } catch (const std::exception&) {
            ++rep.n_failed;
            continue;
        }
        if (!sol.converged) {
            ++rep.n_failed;
            continue;
        }

        const Vec3 da = attitude_error(sol.pose.attitude, config.truth.attitude);
        const Vec3 dp = sol.pose.translation - config.truth.translation;
        const auto est = estimate_observations(noisy, sol.pose);

        std::size_t c = 0;
        auto put = [&](const Vec3& v) {
            row[c++] = v.x();
            row[c++] = v.y();
            row[c++] = v.z();
        };
        put(da);
        put(dp);
        att.add(da);
        trans.add(dp);
        alpha_sum += da;
        for (std::size_t i = 0; i < n_obs; ++i) {
            const auto& truth_i = tmpl.observations[i];
            const auto& noisy_i = noisy.observations[i];
            const Vec3 est_b = est[i].b_hat - truth_i.b_tilde;
            const Vec3 res_b = est[i].b_hat - noisy_i.b_tilde;
            const Vec3 est_r = est[i].r_hat - truth_i.r_tilde;
            const Vec3 res_r = est[i].r_hat - noisy_i.r_tilde;
            put(est_b);
            put(res_b);
            put(est_r);
            put(res_r);
            obs_moments[i][0].add(est_b);
            obs_moments[i][1].add(est_r);
            obs_moments[i][2].add(res_b);
            obs_moments[i][3].add(res_r);
            const Vec3 d_a = noise[i].delta_b - a_true * noise[i].delta_r;
            cross_sum[i] += da * d_a.transpose();
            da_sum[i] += d_a;
        }
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (std::abs(row[j]) <= rep.coordinates[j].sigma3) {
                ++rep.coordinates[j].inside;
            }
        }
        if (config.keep_samples) {
            rep.sample_indices.push_back(k);
            for (std::size_t j = 0; j < row.size(); ++j) {
                rep.errors[j].push_back(row[j]);
            }
        }
    }

    const std::size_t ok = config.n_samples - rep.n_failed;
    rep.failed = static_cast<double>(rep.n_failed) > 0.01 * static_cast<double>(config.n_samples);
    for (auto& c : rep.coordinates) {
        c.coverage = ok > 0 ? static_cast<double>(c.inside) / static_cast<double>(ok) : 0.0;
    }
    rep.empirical_attitude = att.covariance();
    rep.empirical_translation = trans.covariance();
    rep.observations.resize(n_obs);
    for (std::size_t i = 0; i < n_obs; ++i) {
        rep.observations[i].est_b = obs_moments[i][0].covariance();
        rep.observations[i].est_r = obs_moments[i][1].covariance();
        rep.observations[i].res_b = obs_moments[i][2].covariance();
        rep.observations[i].res_r = obs_moments[i][3].covariance();
        if (ok > 1) {
            const double n = static_cast<double>(ok);
            rep.observations[i].alpha_da = (cross_sum[i] - alpha_sum * da_sum[i].transpose() / n) / (n - 1.0);
        }
    }
    return rep;
}

} // namespace tlspose
