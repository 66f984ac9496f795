#pragma once

#include <stdexcept>
#include <string>

namespace mdiag {

// Mirrors mdiag_status in mdiag.h; the C layer maps these one-to-one.
enum class ErrorCode {
  kInvalidArgument = 2,
  kIo = 3,
  kSchema = 4,
  kSpecHashMismatch = 5,
  kNoData = 6,
  kDiverged = 7,
  kUnavailable = 8,
  kInternal = 9,
};

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

}  // namespace mdiag
