#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tora {

/// Failure classes. Each maps to a stable short string that the CLI prints on
/// standard error so callers can classify failures without parsing prose.
enum class ErrorCode {
  kFormat,             // bad magic / malformed header
  kTruncated,          // header and payload lengths disagree
  kUnsupportedLayout,  // column-major or unsupported dtype
  kIo,                 // open/read/write failure
  kValidation,         // precondition or shape violation
  kDegenerate,         // input too degenerate for the requested quantity
  kConfig,             // inconsistent configuration
  kNumerical,          // NaN/Inf produced during computation
};

constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFormat: return "format_error";
    case ErrorCode::kTruncated: return "truncation_error";
    case ErrorCode::kUnsupportedLayout: return "unsupported_layout";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kValidation: return "validation_error";
    case ErrorCode::kDegenerate: return "degenerate_input";
    case ErrorCode::kConfig: return "configuration_error";
    case ErrorCode::kNumerical: return "numerical_failure";
  }
  return "unknown_error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace tora
