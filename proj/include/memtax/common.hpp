#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace memtax {

using TokenId = std::uint32_t;

inline constexpr std::size_t kSampleLength = 64;
inline constexpr std::size_t kPromptLength = 32;
inline constexpr std::size_t kContinuationLength = kSampleLength - kPromptLength;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input file.
class LoadError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Raised before any work is done when a run configuration is unusable.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Selects between the OpenMP kernel and its serial reference.
enum class Execution { serial, parallel };

}  // namespace memtax
