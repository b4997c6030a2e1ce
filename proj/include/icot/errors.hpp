#pragma once

#include <stdexcept>
#include <string>

namespace icot {

/// Base class for all icot errors. Subclasses map onto distinct CLI exit codes.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration (bad dimensions, bad rates, mode mismatches).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Invalid or malformed data (bad input characters, schema violations, empty references).
class DataError : public Error {
public:
  using Error::Error;
};

/// Illegal state transition (double adapter attach, missing prerequisite checkpoint).
class StateError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
  using Error::Error;
};

/// Judge endpoint failed after all retries.
class JudgeError : public Error {
public:
  using Error::Error;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config = 2;
inline constexpr int data = 3;
inline constexpr int divergence = 4;
inline constexpr int judge = 5;
}  // namespace exit_code

}  // namespace icot
