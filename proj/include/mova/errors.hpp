// Copyright 2026 The mova-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mova {

/// Root of every exception the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand extents do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed config, file content, or argument values.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A non-finite value was produced or observed.
class NumericError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Routing failures. The kind lets callers pick a fallback.
class RoutingError : public Error {
public:
    enum class Kind { unknown_expert, empty_response, malformed_response, missing_context, routed_empty, feature_mismatch };

    RoutingError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class TrainingError : public Error {
public:
    TrainingError(std::size_t step, const std::string& what)
        : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// A component failure annotated with the pipeline stage that raised it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace mova
