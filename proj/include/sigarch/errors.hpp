#pragma once

#include <stdexcept>
#include <string>

namespace sigarch {

/// Root of every error raised by the library. Callers that only need a
/// message can catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  /// Short machine-readable tag, e.g. "DimensionMismatch".
  [[nodiscard]] virtual const char* kind() const noexcept = 0;
};

#define SIGARCH_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(what) {}             \
    [[nodiscard]] const char* kind() const noexcept override {          \
      return #Name;                                                     \
    }                                                                   \
  };

SIGARCH_DEFINE_ERROR(DegenerateInput)
SIGARCH_DEFINE_ERROR(InvalidRank)
SIGARCH_DEFINE_ERROR(DimensionMismatch)
SIGARCH_DEFINE_ERROR(InvalidParameter)
SIGARCH_DEFINE_ERROR(ShapeMismatch)
SIGARCH_DEFINE_ERROR(BuildFailed)
SIGARCH_DEFINE_ERROR(IoError)
SIGARCH_DEFINE_ERROR(FormatError)
SIGARCH_DEFINE_ERROR(ParseError)
SIGARCH_DEFINE_ERROR(AlignmentError)
SIGARCH_DEFINE_ERROR(ConfigError)
SIGARCH_DEFINE_ERROR(SeparationUnreachable)

#undef SIGARCH_DEFINE_ERROR

}  // namespace sigarch
