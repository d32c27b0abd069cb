// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Command implementations behind the tlspose executable. Each command takes
// its options plus output and diagnostic streams and returns the process exit
// code, so the whole front end can be driven from tests.

#include "tlspose/analytics.hpp"
#include "tlspose/errors.hpp"
#include "tlspose/geometry.hpp"
#include "tlspose/model.hpp"
#include "tlspose/montecarlo.hpp"
#include "tlspose/scan_io.hpp"
#include "tlspose/solver.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace tlspose::cli
{

enum ExitCode : int
{
    kSuccess = 0,
    kNotObservable = 2,
    kInvalidInput = 3,
    kSolveFailure = 4,
    kNotCalibrated = 5,
};

struct SolveOptions
{
    std::string input;
    std::optional<std::string> config;
    std::optional<std::string> out; ///< stdout when empty
    bool isotropic = false;
};

struct MonteCarloOptions
{
    std::string input;
    std::optional<std::string> config;
    std::size_t samples = 10000;
    std::uint64_t seed = 0;
    std::string out_dir = "montecarlo_out";
    bool assert_calibration = false;
};

struct ValidateOptions
{
    std::string input;
};

/// Sets the spdlog level from TLSPOSE_LOG (error, warn, info, debug). Logs go to stderr.
inline void configure_logging()
{
    auto logger = spdlog::get("tlspose");
    if (!logger) {
        logger = spdlog::stderr_color_mt("tlspose");
    }
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("TLSPOSE_LOG")) {
        const std::string level(env);
        if (level == "error") {
            spdlog::set_level(spdlog::level::err);
        } else if (level == "warn") {
            spdlog::set_level(spdlog::level::warn);
        } else if (level == "info") {
            spdlog::set_level(spdlog::level::info);
        } else if (level == "debug") {
            spdlog::set_level(spdlog::level::debug);
        } else {
            spdlog::warn("ignoring unknown TLSPOSE_LOG value '{}'", level);
        }
    }
}

namespace detail
{

inline std::string format_vec(const Vec3& v) { return fmt::format("[{:.17g}, {:.17g}, {:.17g}]", v.x(), v.y(), v.z()); }

// Maps the library's exceptions onto the exit-code contract.
template <typename F>
int guarded(std::ostream& err, F&& body)
{
    try {
        return body();
    } catch (const ObservabilityError& e) {
        err << "error: pose not observable: " << e.what() << "\n";
        if (e.null_direction()) {
            err << "null direction: " << format_vec(*e.null_direction()) << "\n";
        }
        return kNotObservable;
    } catch (const RankDeficientError& e) {
        err << "error: attitude profile matrix has rank " << e.rank() << ": " << e.what() << "\n";
        return kNotObservable;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kInvalidInput;
    } catch (const NonSpdError& e) {
        err << "error: " << e.what() << "\n";
        return kInvalidInput;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kInvalidInput;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kSolveFailure;
    }
}

// Returns 0 when the instance may be solved, otherwise the exit code after
// printing every violation.
inline int check_instance(const ProblemInstance& inst, std::ostream& err)
{
    const ValidationReport report = validate_instance(inst);
    if (report.ok()) {
        return kSuccess;
    }
    for (const auto& v : report.violations) {
        err << "error: ";
        if (v.observation) {
            err << "observations[" << *v.observation << "]: ";
        }
        err << v.message << "\n";
    }
    for (const auto& v : report.violations) {
        if (v.kind != ViolationKind::TooFewObservations && v.kind != ViolationKind::CollinearReferences) {
            return kInvalidInput;
        }
    }
    if (inst.size() > 0) {
        const ObservabilityDiagnosis diag = observability_check(inst);
        err << "rank(B) = " << diag.rank_of_b << "\n";
        if (diag.null_direction) {
            err << "null direction: " << format_vec(*diag.null_direction) << "\n";
        }
    }
    return kNotObservable;
}

inline SolverConfig solver_config(const std::optional<std::string>& path)
{
    return path ? io::load_solver_config(*path) : SolverConfig{};
}

struct ObservationSummary
{
    Vec3 b_hat, r_hat;
    Mat3 p_b, p_r, cov_res_b, cov_res_r;
};

struct CovarianceSummary
{
    Mat3 p_delta_alpha;
    Mat3 cov_p;
    Mat6 p_f;
    std::vector<ObservationSummary> observations;
};

inline CovarianceSummary summarize(const AnalyticsReport& r)
{
    CovarianceSummary s{r.p_delta_alpha, r.cov_p, r.p_f, {}};
    for (const auto& o : r.per_observation) {
        s.observations.push_back({o.b_hat, o.r_hat, o.p_b, o.p_r, o.cov_res_b, o.cov_res_r});
    }
    return s;
}

inline CovarianceSummary summarize(const IsotropicReport& r)
{
    CovarianceSummary s{r.p_delta_alpha, r.cov_p, r.p_f, {}};
    for (const auto& o : r.per_observation) {
        s.observations.push_back({o.b_hat, o.r_hat, o.p_b, o.p_r, o.cov_res_b, o.cov_res_r});
    }
    return s;
}

inline io::json sigma3_json(const Mat3& cov) { return io::detail::to_json(tlspose::detail::sigma3(cov)); }

} // namespace detail

/// Structured report of one solve, with the input embedded for re-runs.
inline io::json run_report(const io::ScanFile& scan, const PoseSolution& sol, const detail::CovarianceSummary& cov,
                           const std::string& method)
{
    using io::detail::to_json;
    io::json rep;
    rep["report_type"] = "run_report";
    rep["tool_version"] = io::kToolVersion;
    rep["schema_version"] = io::kSchemaVersion;
    rep["seed"] = nullptr;
    rep["input"] = io::scan_to_json(scan);

    io::json solution;
    solution["method"] = method;
    solution["attitude"] = to_json(sol.pose.attitude.matrix());
    solution["translation"] = to_json(sol.pose.translation);
    try {
        const EulerAngles e = attitude_to_euler(sol.pose.attitude);
        solution["euler_deg"] = {{"roll", e.roll}, {"pitch", e.pitch}, {"yaw", e.yaw}};
    } catch (const DegenerateRepresentationError&) {
        solution["euler_deg"] = nullptr;
    }
    solution["converged"] = sol.converged;
    solution["iterations"] = sol.iterations;
    solution["initial_cost"] = sol.initial_cost;
    solution["final_cost"] = sol.final_cost;
    io::json steps = io::json::array();
    for (const auto& s : sol.steps) {
        steps.push_back({{"attitude_step", s.attitude_step}, {"translation_step", s.translation_step}, {"cost", s.cost}});
    }
    solution["steps"] = std::move(steps);
    if (scan.truth) {
        solution["attitude_error_rad"] = geodesic_distance(sol.pose.attitude, scan.truth->attitude);
        solution["translation_error_m"] = (sol.pose.translation - scan.truth->translation).norm();
    }
    rep["solution"] = std::move(solution);

    rep["covariances"] = {
        {"attitude", to_json(cov.p_delta_alpha)},
        {"attitude_sigma3", detail::sigma3_json(cov.p_delta_alpha)},
        {"translation", to_json(cov.cov_p)},
        {"translation_sigma3", detail::sigma3_json(cov.cov_p)},
        {"joint_crlb", to_json(cov.p_f)},
    };

    io::json obs = io::json::array();
    for (std::size_t i = 0; i < cov.observations.size(); ++i) {
        const auto& o = cov.observations[i];
        const auto& in = scan.instance.observations[i];
        obs.push_back({
            {"b_hat", to_json(o.b_hat)},
            {"r_hat", to_json(o.r_hat)},
            {"b_residual", to_json(Vec3(o.b_hat - in.b_tilde))},
            {"r_residual", to_json(Vec3(o.r_hat - in.r_tilde))},
            {"cov_b_hat", to_json(o.p_b)},
            {"cov_r_hat", to_json(o.p_r)},
            {"cov_b_residual", to_json(o.cov_res_b)},
            {"cov_r_residual", to_json(o.cov_res_r)},
            {"b_hat_sigma3", detail::sigma3_json(o.p_b)},
            {"r_hat_sigma3", detail::sigma3_json(o.p_r)},
            {"b_residual_sigma3", detail::sigma3_json(o.cov_res_b)},
            {"r_residual_sigma3", detail::sigma3_json(o.cov_res_r)},
        });
    }
    rep["observations"] = std::move(obs);
    return rep;
}

inline int cmd_solve(const SolveOptions& opt, std::ostream& out, std::ostream& err)
{
    return detail::guarded(err, [&]() -> int {
        const io::ScanFile scan = io::load_scan(opt.input);
        if (const int code = detail::check_instance(scan.instance, err); code != kSuccess) {
            return code;
        }
        const SolverConfig config = detail::solver_config(opt.config);

        PoseSolution sol;
        detail::CovarianceSummary cov;
        std::string method;
        if (opt.isotropic) {
            if (!scan.sigmas_r) {
                throw ParseError("observations", "--isotropic needs sigma_r and sigma_b on every observation");
            }
            sol = solve_isotropic(scan.instance, *scan.sigmas_r, *scan.sigmas_b);
            cov = detail::summarize(isotropic_closed_form(scan.instance, sol.pose, *scan.sigmas_r, *scan.sigmas_b));
            method = "isotropic_closed_form";
        } else {
            sol = solve_pose(scan.instance, config);
            cov = detail::summarize(analyze(scan.instance, sol.pose));
            method = "gauss_newton";
        }
        spdlog::info("solved {} observations in {} iterations, cost {:.6g}", scan.instance.size(), sol.iterations, sol.final_cost);

        const std::string text = run_report(scan, sol, cov, method).dump(2) + "\n";
        if (opt.out) {
            std::ofstream file(*opt.out, std::ios::binary);
            if (!file) {
                throw std::runtime_error("cannot write " + *opt.out);
            }
            file << text;
        } else {
            out << text;
        }
        if (!sol.converged) {
            err << "error: solver did not converge in " << sol.iterations << " iterations\n";
            return kSolveFailure;
        }
        return kSuccess;
    });
}

/// Noiseless template for the harness: body vectors from the file, reference
/// vectors placed exactly at A^T (b + p) for the file's truth pose.
inline ProblemInstance monte_carlo_template(const io::ScanFile& scan)
{
    ProblemInstance tmpl = scan.instance;
    for (auto& o : tmpl.observations) {
        o.r_tilde = scan.truth->attitude.matrix().transpose() * (o.b_tilde + scan.truth->translation);
    }
    return tmpl;
}

inline io::json monte_carlo_json(const io::ScanFile& scan, const MonteCarloReport& rep)
{
    using io::detail::to_json;
    io::json j;
    j["report_type"] = "montecarlo_report";
    j["tool_version"] = io::kToolVersion;
    j["schema_version"] = io::kSchemaVersion;
    j["seed"] = rep.seed;
    j["input"] = io::scan_to_json(scan);
    j["n_samples"] = rep.n_samples;
    j["n_failed"] = rep.n_failed;
    j["calibrated"] = rep.calibrated();
    j["min_coverage"] = rep.min_coverage();
    io::json coords = io::json::array();
    for (const auto& c : rep.coordinates) {
        coords.push_back({{"name", c.name}, {"sigma3", c.sigma3}, {"inside", c.inside}, {"coverage", c.coverage}});
    }
    j["coordinates"] = std::move(coords);
    j["attitude"] = {{"analytic", to_json(rep.analytic.p_delta_alpha)},
                     {"empirical", to_json(rep.empirical_attitude)},
                     {"frobenius_relative_error", relative_frobenius(rep.empirical_attitude, rep.analytic.p_delta_alpha)}};
    j["translation"] = {{"analytic", to_json(rep.analytic.cov_p)},
                        {"empirical", to_json(rep.empirical_translation)},
                        {"frobenius_relative_error", relative_frobenius(rep.empirical_translation, rep.analytic.cov_p)}};
    return j;
}

inline int cmd_montecarlo(const MonteCarloOptions& opt, std::ostream& out, std::ostream& err)
{
    return detail::guarded(err, [&]() -> int {
        const io::ScanFile scan = io::load_scan(opt.input);
        if (!scan.truth) {
            throw ParseError("truth", "montecarlo needs a truth pose in the input file");
        }
        if (opt.samples < 1) {
            throw std::invalid_argument("--samples must be at least 1");
        }
        MonteCarloConfig config;
        config.n_samples = opt.samples;
        config.rng_seed = opt.seed;
        config.truth = *scan.truth;
        config.noiseless = monte_carlo_template(scan);
        config.solver = detail::solver_config(opt.config);
        config.keep_samples = true;
        if (const int code = detail::check_instance(config.noiseless, err); code != kSuccess) {
            return code;
        }

        const MonteCarloReport rep = run_monte_carlo(config);

        namespace fs = std::filesystem;
        const fs::path dir(opt.out_dir);
        fs::create_directories(dir);
        for (std::size_t c = 0; c < rep.coordinates.size(); ++c) {
            std::ofstream csv(dir / (rep.coordinates[c].name + ".csv"), std::ios::binary);
            if (!csv) {
                throw std::runtime_error("cannot write into " + dir.string());
            }
            const double s3 = rep.coordinates[c].sigma3;
            csv << "sample_index,error,sigma3_upper,sigma3_lower\n";
            for (std::size_t k = 0; k < rep.sample_indices.size(); ++k) {
                csv << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", rep.sample_indices[k], rep.errors[c][k], s3, -s3);
            }
        }
        {
            std::ofstream report(dir / "report.json", std::ios::binary);
            report << monte_carlo_json(scan, rep).dump(2) << "\n";
        }

        out << fmt::format("samples: {} (failed {})\n", rep.n_samples, rep.n_failed);
        out << fmt::format("min 3-sigma coverage: {:.4f}\n", rep.min_coverage());
        out << fmt::format("attitude covariance relative error: {:.4f}\n",
                           relative_frobenius(rep.empirical_attitude, rep.analytic.p_delta_alpha));
        out << fmt::format("translation covariance relative error: {:.4f}\n",
                           relative_frobenius(rep.empirical_translation, rep.analytic.cov_p));
        for (const auto& c : rep.coordinates) {
            spdlog::debug("{}: coverage {:.4f}, 3-sigma {:.6g}", c.name, c.coverage, c.sigma3);
        }

        if (rep.failed) {
            err << "error: " << rep.n_failed << " of " << rep.n_samples << " samples failed to solve\n";
            return kSolveFailure;
        }
        if (opt.assert_calibration && !rep.calibrated()) {
            for (const auto& c : rep.coordinates) {
                if (c.coverage < 0.990 || c.coverage > 1.000) {
                    err << "error: " << c.name << " coverage " << c.coverage << " outside [0.990, 1.000]\n";
                }
            }
            return kNotCalibrated;
        }
        return kSuccess;
    });
}

inline int cmd_validate(const ValidateOptions& opt, std::ostream& out, std::ostream& err)
{
    return detail::guarded(err, [&]() -> int {
        const io::ScanFile scan = io::load_scan(opt.input);
        const ProblemInstance& inst = scan.instance;
        const ValidationReport report = validate_instance(inst);

        out << "observations: " << inst.size() << "\n";
        bool noise_ok = true;
        for (std::size_t i = 0; i < inst.size(); ++i) {
            const bool spd = inst.observations[i].noise.joint().allFinite() && noise_is_spd(inst.observations[i].noise);
            noise_ok = noise_ok && spd;
            out << "observation " << i << ": noise " << (spd ? "SPD" : "NOT SPD") << "\n";
        }
        for (const auto& v : report.violations) {
            out << "violation: ";
            if (v.observation) {
                out << "observations[" << *v.observation << "]: ";
            }
            out << v.message << "\n";
        }
        if (!noise_ok || (!report.ok() && !report.observability_violated())) {
            return kInvalidInput;
        }

        const ObservabilityDiagnosis diag = observability_check(inst);
        out << "rank(B): " << diag.rank_of_b << "\n";
        out << fmt::format("singular values of B: {}\n", detail::format_vec(diag.b_singular_values));
        out << fmt::format("smallest Hessian eigenvalue: {:.17g}\n", diag.smallest_h_eigenvalue);
        out << fmt::format("largest Hessian eigenvalue: {:.17g}\n", diag.largest_h_eigenvalue);
        if (diag.null_direction) {
            out << "null direction: " << detail::format_vec(*diag.null_direction) << "\n";
        }
        const bool observable = diag.observable() && !report.observability_violated();
        out << "observable: " << (observable ? "yes" : "no") << "\n";
        return observable ? kSuccess : kNotObservable;
    });
}

/// Parses argv and dispatches to a command.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    configure_logging();
    CLI::App app{"Total least squares pose estimation from vector observations"};
    app.require_subcommand(1);

    SolveOptions solve;
    auto* solve_cmd = app.add_subcommand("solve", "Estimate the pose and its covariances");
    solve_cmd->add_option("input", solve.input, "Problem or run-report file")->required();
    solve_cmd->add_option("--config", solve.config, "Solver tolerance file");
    solve_cmd->add_option("--out", solve.out, "Write the run report here instead of stdout");
    solve_cmd->add_flag("--isotropic", solve.isotropic, "Use the closed-form isotropic solution with per-observation sigmas");

    MonteCarloOptions mc;
    auto* mc_cmd = app.add_subcommand("montecarlo", "Check analytic covariances against simulation");
    mc_cmd->add_option("input", mc.input, "Problem file with a truth pose")->required();
    mc_cmd->add_option("--config", mc.config, "Solver tolerance file");
    mc_cmd->add_option("--samples", mc.samples, "Number of noise draws")->capture_default_str();
    mc_cmd->add_option("--seed", mc.seed, "Random seed")->capture_default_str();
    mc_cmd->add_option("--out-dir", mc.out_dir, "Directory for report.json and per-coordinate CSV files")->capture_default_str();
    mc_cmd->add_flag("--assert-calibration", mc.assert_calibration, "Exit 5 unless every 3-sigma coverage is in [0.990, 1.000]");

    ValidateOptions val;
    auto* val_cmd = app.add_subcommand("validate", "Check a problem file for solvability");
    val_cmd->add_option("input", val.input, "Problem file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kInvalidInput;
    }

    if (solve_cmd->parsed()) {
        return cmd_solve(solve, out, err);
    }
    if (mc_cmd->parsed()) {
        return cmd_montecarlo(mc, out, err);
    }
    return cmd_validate(val, out, err);
}

} // namespace tlspose::cli
