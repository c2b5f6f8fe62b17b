#pragma once

#include <stdexcept>
#include <string>

namespace pcbf {

/// Malformed or inconsistent configuration input.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Offline design failed (infeasible SDP, empty tightened sets, ...).
struct SynthesisError : std::runtime_error {
  explicit SynthesisError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A numerical solve failed to converge or returned garbage.
struct SolveError : std::runtime_error {
  explicit SolveError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A guarantee that should hold by construction was observed to fail.
struct InvariantError : std::runtime_error {
  explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Caller misuse (dimension mismatch, incompatible arguments).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pcbf
