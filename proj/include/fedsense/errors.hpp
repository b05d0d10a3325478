#pragma once

#include <stdexcept>

namespace fedsense {

// Precondition violated by the caller (bad count, out-of-range parameter).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed file contents: IQ captures, coefficient snapshots, CSV tables.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A zero or rank-deficient frame reached a ratio that needs positive eigenvalues.
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A dataset cannot support fitting: zero spread, or a single class.
class DegenerateData : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Rejected run configuration (unknown key, invariant violated on load).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedsense
