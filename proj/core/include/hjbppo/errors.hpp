#pragma once

#include <stdexcept>
#include <string>

namespace hjbppo {

// Bad user input: malformed config, unknown keys, invalid CLI flags. Exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Training blew up: non-finite loss or gradient, unrecoverable iteration state.
// Exit code 2.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// An analytic self-check failed (Riccati residual, HJB probe, equilibrium).
// Exit code 3.
class OracleError : public std::runtime_error {
 public:
  explicit OracleError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hjbppo
