#pragma once

#include <stdexcept>
#include <string>

namespace discosyn {

enum class ErrorCode {
  kInvalidArgument,
  kFormat,
  kUnknownLabel,
  kConfig,
  kTransport,
  kGenerationRejected,
  kState,
  kIo,
};

const char* error_code_name(ErrorCode code);

// All library failures surface as this exception; the C API maps the code onto
// its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace discosyn
