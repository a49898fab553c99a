#pragma once

#include <stdexcept>
#include <string>

namespace pragnav {

enum class ErrorCode {
  kInvalidArgument = 1,
  kNotFound = 2,
  kInfeasible = 3,
  kCorrupt = 4,
  kVersionMismatch = 5,
  kIo = 6,
  kInvalidState = 7,
  kUnsupported = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace pragnav
