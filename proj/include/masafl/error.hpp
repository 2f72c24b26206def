#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace masafl {

// Invalid shapes, out-of-range hyperparameters, bad config values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed an argument the operation cannot accept (empty batch, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values surfaced from arithmetic.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed IDX input. Carries the byte offset where decoding failed.
class IngestionError : public std::runtime_error {
 public:
  IngestionError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace masafl
