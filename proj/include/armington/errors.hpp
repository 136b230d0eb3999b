#pragma once

#include <stdexcept>
#include <string>

namespace armington {

// Exit-code contract shared with the CLI:
//   0 ok, 2 parse, 3 dimension/compatibility, 4 numerical singularity,
//   5 estimation failure.
enum class ErrorCode : int {
  parse = 2,
  dimension = 3,
  singularity = 4,
  estimation = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string kind, const std::string& message)
      : std::runtime_error(message), code_(code), kind_(std::move(kind)) {}

  ErrorCode code() const noexcept { return code_; }
  int exit_code() const noexcept { return static_cast<int>(code_); }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorCode code_;
  std::string kind_;
};

// Malformed input: bad rows, unparsable fields. Carries a line number when known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& message, long line = -1)
      : Error(ErrorCode::parse, "parse", line >= 0 ? "line " + std::to_string(line) + ": " + message
                                                   : message),
        line_(line) {}
  long line() const noexcept { return line_; }

 private:
  long line_;
};

// Duplicate (country, period) keys.
class ConflictError : public Error {
 public:
  explicit ConflictError(const std::string& message) : Error(ErrorCode::parse, "conflict", message) {}
};

// Too few countries/periods/observations, or method/data incompatibility.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& message)
      : Error(ErrorCode::dimension, "dimension", message) {}
};

// Method asked of data that cannot support it (e.g. IVFE without quantities).
class NotApplicableError : public Error {
 public:
  explicit NotApplicableError(const std::string& message)
      : Error(ErrorCode::dimension, "not_applicable", message) {}
};

// Rank-deficient designs, 1 + kappa*omega ~ 0, non-invertible transforms.
class SingularityError : public Error {
 public:
  explicit SingularityError(const std::string& message)
      : Error(ErrorCode::singularity, "singularity", message) {}
};

// Non-convergence, failed gradient validation, degenerate fits.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message)
      : Error(ErrorCode::singularity, "numerical", message) {}
};

class EstimationError : public Error {
 public:
  EstimationError(std::string kind, const std::string& message)
      : Error(ErrorCode::estimation, std::move(kind), message) {}
};

// Feenstra moment inversion hit a negative discriminant; carries the
// estimated moments so callers can report them.
class ComplexRootsError : public EstimationError {
 public:
  ComplexRootsError(double alpha1, double alpha2, const std::string& message)
      : EstimationError("complex_roots", message), alpha1_(alpha1), alpha2_(alpha2) {}
  double alpha1() const noexcept { return alpha1_; }
  double alpha2() const noexcept { return alpha2_; }

 private:
  double alpha1_;
  double alpha2_;
};

}  // namespace armington
