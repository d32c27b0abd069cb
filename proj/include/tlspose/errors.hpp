// Copyright (C) 2026 The tlspose authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <string>

namespace tlspose
{

/// The attitude is not observable from the given observation set: the
/// reduced attitude Hessian is singular or too badly conditioned to invert.
class ObservabilityError : public std::runtime_error
{
public:
    ObservabilityError(const std::string& what,
                       double smallest_eigenvalue,
                       std::optional<Eigen::Vector3d> null_direction = std::nullopt)
        : std::runtime_error(what)
        , smallest_eigenvalue_(smallest_eigenvalue)
        , null_direction_(std::move(null_direction))
    {
    }

    double smallest_eigenvalue() const noexcept { return smallest_eigenvalue_; }

    /// Unit vector spanning the (numerical) null space of the Hessian, when known.
    const std::optional<Eigen::Vector3d>& null_direction() const noexcept { return null_direction_; }

private:
    double smallest_eigenvalue_;
    std::optional<Eigen::Vector3d> null_direction_;
};

/// The attitude profile matrix has rank < 2, so the SVD attitude is not unique.
class RankDeficientError : public std::runtime_error
{
public:
    RankDeficientError(const std::string& what, int rank)
        : std::runtime_error(what)
        , rank_(rank)
    {
    }

    int rank() const noexcept { return rank_; }

private:
    int rank_;
};

/// A noise covariance or derived weight matrix is not positive definite.
class NonSpdError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Euler angles requested too close to the pitch singularity.
class DegenerateRepresentationError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; `path()` names the offending JSON location.
class ParseError : public std::runtime_error
{
public:
    ParseError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what)
        , path_(path)
    {
    }

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace tlspose
