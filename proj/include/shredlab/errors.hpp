#pragma once

#include <stdexcept>
#include <string>

namespace shredlab {

/// Invalid configuration, shapes or arguments. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values during training, rollout or gradient probing. Exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed container files.
class FormatError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, size_mismatch, non_finite, bad_header, io };

  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace shredlab
