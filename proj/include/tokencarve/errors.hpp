// Copyright (C) 2026 TokenCarve Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tokencarve {

/// Invalid shapes or dimension mismatches between operands.
class ShapeError : public std::invalid_argument {
  public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Invalid configuration: bad knob values, infeasible budgets, schema violations.
class ConfigError : public std::invalid_argument {
  public:
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Numeric failure at runtime (non-convergence, non-finite values).
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem and serialization failures.
class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tokencarve
