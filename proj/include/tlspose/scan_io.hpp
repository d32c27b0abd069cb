// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// JSON reading and writing for problem files, solver configs and reports.
// Parsing is strict: unknown keys, wrong types and wrong shapes raise
// ParseError carrying the JSON path of the offending element.

#include "tlspose/errors.hpp"
#include "tlspose/geometry.hpp"
#include "tlspose/model.hpp"
#include "tlspose/solver.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace tlspose::io
{

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// Parsed problem file.
struct ScanFile
{
    int schema_version = kSchemaVersion;
    std::string description;
    ProblemInstance instance;
    std::optional<Pose> truth;
    /// Per-observation isotropic sigmas; present only when every observation carries both.
    std::optional<std::vector<double>> sigmas_r;
    std::optional<std::vector<double>> sigmas_b;
};

namespace detail
{

inline std::string child(const std::string& path, std::string_view key)
{
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

inline std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline void require_object(const json& j, const std::string& path)
{
    if (!j.is_object()) {
        throw ParseError(path.empty() ? "<root>" : path, "expected an object");
    }
}

inline void reject_unknown(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed)
{
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (auto a : allowed) {
            known = known || it.key() == a;
        }
        if (!known) {
            throw ParseError(child(path, it.key()), "unknown field");
        }
    }
}

inline const json& field(const json& j, const std::string& path, std::string_view key)
{
    const auto it = j.find(std::string(key));
    if (it == j.end()) {
        throw ParseError(child(path, key), "missing required field");
    }
    return *it;
}

inline double number(const json& j, const std::string& path)
{
    if (!j.is_number()) {
        throw ParseError(path, "expected a number");
    }
    return j.get<double>();
}

inline Vec3 vec3(const json& j, const std::string& path)
{
    if (!j.is_array() || j.size() != 3) {
        throw ParseError(path, "expected an array of 3 numbers");
    }
    Vec3 v;
    for (std::size_t i = 0; i < 3; ++i) {
        v(static_cast<Eigen::Index>(i)) = number(j[i], index(path, i));
    }
    return v;
}

template <int N>
Eigen::Matrix<double, N, N> matrix(const json& j, const std::string& path)
{
    const auto n = static_cast<std::size_t>(N);
    if (!j.is_array() || j.size() != n) {
        throw ParseError(path, "expected " + std::to_string(N) + " rows");
    }
    Eigen::Matrix<double, N, N> m;
    for (std::size_t r = 0; r < n; ++r) {
        const std::string row_path = index(path, r);
        if (!j[r].is_array() || j[r].size() != n) {
            throw ParseError(row_path, "expected a row of " + std::to_string(N) + " numbers");
        }
        for (std::size_t c = 0; c < n; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(j[r][c], index(row_path, c));
        }
    }
    return m;
}

template <typename Derived>
json to_json(const Eigen::MatrixBase<Derived>& m)
{
    if (m.cols() == 1) {
        json a = json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            a.push_back(m(i, 0));
        }
        return a;
    }
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Pose parse_pose(const json& j, const std::string& path)
{
    require_object(j, path);
    reject_unknown(j, path, {"attitude", "translation"});
    const std::string att_path = child(path, "attitude");
    const Mat3 a = matrix<3>(field(j, path, "attitude"), att_path);
    Pose pose;
    try {
        pose.attitude = RotationMatrix::from_matrix(a, 1e-9);
    } catch (const std::invalid_argument& e) {
        throw ParseError(att_path, e.what());
    }
    pose.translation = vec3(field(j, path, "translation"), child(path, "translation"));
    return pose;
}

} // namespace detail

/// Parses a problem file. A run report is also accepted, in which case the
/// problem embedded under "input" is returned.
inline ScanFile parse_scan(const json& root)
{
    using namespace detail;
    require_object(root, "");
    if (root.contains("report_type")) {
        if (!root["report_type"].is_string()) {
            throw ParseError("report_type", "expected a string");
        }
        if (!root.contains("input")) {
            throw ParseError("input", "report carries no embedded input");
        }
        try {
            return parse_scan(root["input"]);
        } catch (const ParseError& e) {
            throw ParseError(child("input", e.path()), std::string(e.what()).substr(e.path().size() + 2));
        }
    }
    reject_unknown(root, "", {"schema_version", "description", "observations", "truth"});

    ScanFile scan;
    const json& version = field(root, "", "schema_version");
    if (!version.is_number_integer()) {
        throw ParseError("schema_version", "expected an integer");
    }
    scan.schema_version = version.get<int>();
    if (scan.schema_version != kSchemaVersion) {
        throw ParseError("schema_version", "unsupported version " + std::to_string(scan.schema_version));
    }
    if (root.contains("description")) {
        if (!root["description"].is_string()) {
            throw ParseError("description", "expected a string");
        }
        scan.description = root["description"].get<std::string>();
    }

    const json& obs = field(root, "", "observations");
    if (!obs.is_array()) {
        throw ParseError("observations", "expected an array");
    }
    std::vector<double> sr, sb;
    std::size_t with_sigma = 0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const std::string path = index("observations", i);
        const json& o = obs[i];
        require_object(o, path);
        reject_unknown(o, path, {"r_tilde", "b_tilde", "R", "sigma_r", "sigma_b"});
        ObservationPair pair;
        pair.r_tilde = vec3(field(o, path, "r_tilde"), child(path, "r_tilde"));
        pair.b_tilde = vec3(field(o, path, "b_tilde"), child(path, "b_tilde"));
        const bool has_sr = o.contains("sigma_r");
        const bool has_sb = o.contains("sigma_b");
        if (has_sr != has_sb) {
            throw ParseError(child(path, has_sr ? "sigma_b" : "sigma_r"), "sigma_r and sigma_b must be given together");
        }
        if (has_sr) {
            sr.push_back(number(o["sigma_r"], child(path, "sigma_r")));
            sb.push_back(number(o["sigma_b"], child(path, "sigma_b")));
            ++with_sigma;
        }
        if (o.contains("R")) {
            const Mat6 joint = matrix<6>(o["R"], child(path, "R"));
            // Only the upper off-diagonal block is kept, so the lower one must agree with it.
            const double scale = std::max(joint.cwiseAbs().maxCoeff(), 1e-300);
            if ((joint.topRightCorner<3, 3>() - joint.bottomLeftCorner<3, 3>().transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
                throw ParseError(child(path, "R"), "cross-covariance blocks are not transposes of each other");
            }
            pair.noise = NoiseModel::from_joint(joint);
        } else if (has_sr) {
            pair.noise = NoiseModel::isotropic(sr.back(), sb.back());
        } else {
            throw ParseError(child(path, "R"), "missing required field");
        }
        scan.instance.observations.push_back(pair);
    }
    if (with_sigma > 0 && with_sigma != obs.size()) {
        throw ParseError("observations", "sigma_r/sigma_b must be given for every observation or for none");
    }
    if (with_sigma > 0) {
        scan.sigmas_r = std::move(sr);
        scan.sigmas_b = std::move(sb);
    }
    if (root.contains("truth")) {
        scan.truth = parse_pose(root["truth"], "truth");
    }
    return scan;
}

inline json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ParseError(path, "cannot open file");
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path, e.what());
    }
}

inline ScanFile load_scan(const std::string& path) { return parse_scan(read_json_file(path)); }

/// Serializes a problem file; parse_scan(scan_to_json(s)) reproduces s exactly.
inline json scan_to_json(const ScanFile& scan)
{
    json root;
    root["schema_version"] = scan.schema_version;
    if (!scan.description.empty()) {
        root["description"] = scan.description;
    }
    json obs = json::array();
    for (std::size_t i = 0; i < scan.instance.size(); ++i) {
        const auto& o = scan.instance.observations[i];
        json jo;
        jo["r_tilde"] = detail::to_json(o.r_tilde);
        jo["b_tilde"] = detail::to_json(o.b_tilde);
        jo["R"] = detail::to_json(o.noise.joint());
        if (scan.sigmas_r) {
            jo["sigma_r"] = (*scan.sigmas_r)[i];
            jo["sigma_b"] = (*scan.sigmas_b)[i];
        }
        obs.push_back(std::move(jo));
    }
    root["observations"] = std::move(obs);
    if (scan.truth) {
        root["truth"] = {{"attitude", detail::to_json(scan.truth->attitude.matrix())},
                         {"translation", detail::to_json(scan.truth->translation)}};
    }
    return root;
}

/// Solver tolerances from a config file; absent keys keep their defaults.
inline SolverConfig parse_solver_config(const json& root)
{
    using namespace detail;
    require_object(root, "");
    reject_unknown(root, "", {"max_iterations", "step_tolerance", "cost_tolerance", "max_step_halvings"});
    SolverConfig cfg;
    if (root.contains("max_iterations")) {
        if (!root["max_iterations"].is_number_integer()) {
            throw ParseError("max_iterations", "expected an integer");
        }
        cfg.max_iterations = root["max_iterations"].get<int>();
    }
    if (root.contains("max_step_halvings")) {
        if (!root["max_step_halvings"].is_number_integer()) {
            throw ParseError("max_step_halvings", "expected an integer");
        }
        cfg.max_step_halvings = root["max_step_halvings"].get<int>();
    }
    if (root.contains("step_tolerance")) {
        cfg.step_tolerance = number(root["step_tolerance"], "step_tolerance");
    }
    if (root.contains("cost_tolerance")) {
        cfg.cost_tolerance = number(root["cost_tolerance"], "cost_tolerance");
    }
    if (cfg.max_iterations < 1 || cfg.max_step_halvings < 0 || !(cfg.step_tolerance > 0.0) || !(cfg.cost_tolerance > 0.0)) {
        throw ParseError("<root>", "solver tolerances must be positive");
    }
    return cfg;
}

inline SolverConfig load_solver_config(const std::string& path) { return parse_solver_config(read_json_file(path)); }

} // namespace tlspose::io
