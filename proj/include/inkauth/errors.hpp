#pragma once

#include <stdexcept>
#include <string>

namespace inkauth {

/// Invalid or inconsistent configuration (non-divisible sizes, bad keys, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numeric argument outside its legal range.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Mismatched array shapes between collaborating values.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A manifest that fails validation; the message names the offending record.
class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operation invoked in the wrong state (e.g. gradients without a forward pass).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace inkauth
