#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace mdclt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative method exhausted its budget before certifying its tolerance.
class NonConvergence : public Error {
 public:
  using Error::Error;
};

class NotPsd : public Error {
 public:
  explicit NotPsd(double min_eigenvalue)
      : Error("matrix is not positive semi-definite (min eigenvalue " +
              std::to_string(min_eigenvalue) + ")"),
        min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class NotPd : public Error {
 public:
  using Error::Error;
};

/// Spectral radius of the companion matrix is not below one.
class Unstable : public Error {
 public:
  explicit Unstable(double rho)
      : Error("autoregression is not stable: spectral radius " +
              std::to_string(rho)),
        rho_(rho) {}
  double spectral_radius() const noexcept { return rho_; }

 private:
  double rho_;
};

class Overflow : public Error {
 public:
  Overflow(std::size_t step, double value)
      : Error("path overflow at step " + std::to_string(step) + " (|Y| = " +
              std::to_string(value) + ")"),
        step_(step),
        value_(value) {}
  Overflow(std::size_t step, double value, std::size_t replication)
      : Error("path overflow at step " + std::to_string(step) + " of replication " +
              std::to_string(replication) + " (|Y| = " + std::to_string(value) + ")"),
        step_(step),
        value_(value),
        replication_(replication) {}
  std::size_t step() const noexcept { return step_; }
  double value() const noexcept { return value_; }
  /// Replication index when raised inside a Monte Carlo run, else SIZE_MAX.
  std::size_t replication() const noexcept { return replication_; }

 private:
  std::size_t step_;
  double value_;
  std::size_t replication_ = static_cast<std::size_t>(-1);
};

class GramSingular : public Error {
 public:
  GramSingular() : Error("Gram matrix is not positive definite") {}
};

class TooFewSamples : public Error {
 public:
  using Error::Error;
};

class BucketTooSmall : public Error {
 public:
  using Error::Error;
};

/// An inequality that must hold pathwise was violated.
class AuditFailure : public Error {
 public:
  AuditFailure(std::string check, std::size_t k, const std::string& detail)
      : Error("audit check " + check + " violated at k=" + std::to_string(k) +
              ": " + detail),
        check_(std::move(check)),
        k_(k) {}
  const std::string& check() const noexcept { return check_; }
  std::size_t index() const noexcept { return k_; }

 private:
  std::string check_;
  std::size_t k_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mdclt
