#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rwre {

enum class ErrorKind {
  InvalidSpec,
  EllipticityViolation,
  NumericalUnderflow,
  NotTransient,
  NoRootInRange,
  TruncationFailure,
  MaxStepsExceeded,
  NonTermination,
  PopulationExplosion,
  BlockTimeout,
  Undetermined,
  InsufficientTail,
  FormMismatch,
  InfiniteMeanSuspected,
  Unsupported,
  EmptySample,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

// Every failure the library reports carries one of the kinds above so that
// callers (the CLI in particular) can turn it into a structured result.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rwre
