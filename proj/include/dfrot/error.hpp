#pragma once

#include <stdexcept>
#include <string>

namespace dfrot {

enum class ErrorCode {
  usage,
  invalid_data,
  dimension_mismatch,
  unsupported_dimension,
  not_orthogonal,
  degenerate_input,
  numerical,
  bad_magic,
  truncated,
  version_mismatch,
  io,
  invariance_failed,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Process exit status the CLI reports for an error of this kind.
int exit_status(ErrorCode code);

namespace exit_codes {
inline constexpr int success = 0;
inline constexpr int usage = 2;
inline constexpr int data = 3;
inline constexpr int numerical = 4;
inline constexpr int invariance = 5;
}  // namespace exit_codes

}  // namespace dfrot
