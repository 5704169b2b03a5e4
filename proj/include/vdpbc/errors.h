#pragma once

#include <stdexcept>
#include <string>

namespace vdpbc {

/// Non-finite state or input components.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Vector/matrix sizes that do not match the owning model.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Factorization failures (singular inertia, singular stiffness, ...).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A storage metric that is not positive definite where it is evaluated.
class CertificateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Controller gains that fail the contraction inequality, or a model the
/// controller cannot be synthesized for.
class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, double time)
      : std::runtime_error(what), time_(time) {}

  /// First integration time at which the state left the admissible region.
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Scenario schema violation. `field()` names the first offending key.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& what)
      : std::invalid_argument(what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace vdpbc
