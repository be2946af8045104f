#pragma once

#include <stdexcept>
#include <string>

namespace stackel {

/// Broad failure class. The CLI maps `validation` to exit code 2 and
/// `numerical` to exit code 3.
enum class ErrorClass { validation, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string code, const std::string& what)
      : std::runtime_error(what), class_(cls), code_(std::move(code)) {}

  ErrorClass error_class() const noexcept { return class_; }
  /// Short machine-readable tag, e.g. "ill-posed-bvp".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorClass class_;
  std::string code_;
};

/// Invalid model parameters or search arguments. `field` names the offending
/// parameter when there is one.
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what, std::string field = {})
      : Error(ErrorClass::validation, "parameter", what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Parameters outside the regime where a model's closed forms hold.
class HypothesisViolation : public Error {
 public:
  explicit HypothesisViolation(const std::string& what)
      : Error(ErrorClass::validation, "hypothesis", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorClass::validation, "configuration", what) {}
};

class NumericalError : public Error {
 public:
  NumericalError(std::string code, const std::string& what)
      : Error(ErrorClass::numerical, std::move(code), what) {}
};

class IntegrationBlowup : public NumericalError {
 public:
  IntegrationBlowup(std::size_t step, double t)
      : NumericalError("integration-blowup",
                       "non-finite state at step " + std::to_string(step) +
                           " (t = " + std::to_string(t) + ")"),
        step_(step),
        t_(t) {}
  std::size_t step() const noexcept { return step_; }
  double time() const noexcept { return t_; }

 private:
  std::size_t step_;
  double t_;
};

class RiccatiBlowup : public NumericalError {
 public:
  explicit RiccatiBlowup(double t)
      : NumericalError("riccati-blowup",
                       "Riccati solution blows up at t = " + std::to_string(t)),
        t_(t) {}
  double time() const noexcept { return t_; }

 private:
  double t_;
};

class IllPosedBvp : public NumericalError {
 public:
  explicit IllPosedBvp(double condition)
      : NumericalError("ill-posed-bvp", "boundary matrix is singular (condition number " +
                                            std::to_string(condition) + ")"),
        condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class BracketError : public NumericalError {
 public:
  explicit BracketError(const std::string& what) : NumericalError("bracket", what) {}
};

class SpectralError : public NumericalError {
 public:
  explicit SpectralError(double discriminant)
      : NumericalError("spectral", "matrix has no real distinct eigenvalues (discriminant " +
                                       std::to_string(discriminant) + ")"),
        discriminant_(discriminant) {}
  double discriminant() const noexcept { return discriminant_; }

 private:
  double discriminant_;
};

class SimulationBlowup : public NumericalError {
 public:
  SimulationBlowup(std::size_t path, std::size_t step)
      : NumericalError("simulation-blowup", "non-finite value on path " + std::to_string(path) +
                                                " at step " + std::to_string(step)),
        path_(path),
        step_(step) {}
  std::size_t path() const noexcept { return path_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t path_;
  std::size_t step_;
};

/// No penalty rate inside the admissible range makes defection unprofitable.
class NoDeterrent : public NumericalError {
 public:
  explicit NoDeterrent(const std::string& what) : NumericalError("no-deterrent", what) {}
};

}  // namespace stackel
