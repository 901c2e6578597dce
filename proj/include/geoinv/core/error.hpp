#pragma once

#include <stdexcept>
#include <string>

namespace geoinv {

enum class ErrorCode {
  InvalidArgument,
  InvalidBounds,
  Domain,
  DimensionMismatch,
  SingularGeometry,
  DegenerateCell,
  NearField,
  Resolution,
  Numeric,
  Io,
  Format,
  Config,
};

const char* to_string(ErrorCode code) noexcept;

// All core failures are reported through this type; the C layer maps the
// code onto a status value.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace geoinv
