#pragma once

#include <stdexcept>
#include <string>

namespace spherecal {

// Input that makes an operation meaningless (zero-length ray, collinear
// triple, observation off the image sphere, ...).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or arguments supplied by the caller.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent data files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  enum class Kind { DatumDeficiency, NoProgress, NonFinite };

  SolverError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace spherecal
