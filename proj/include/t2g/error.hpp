#pragma once

#include <stdexcept>
#include <string>

namespace t2g {

// Each kind maps onto one CLI exit code.
enum class ErrorKind {
  kInvalidInput = 1,
  kIo = 2,
  kCheckpointMissing = 3,
  kCheckpointVersion = 4,
  kUnresolvablePrompt = 5,
  kNumerical = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// Raised by the grasp generator when closure fails on every retry.
class GenerationFailure : public Error {
 public:
  explicit GenerationFailure(const std::string& message)
      : Error(ErrorKind::kNumerical, message) {}
};

}  // namespace t2g
