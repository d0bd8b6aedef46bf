#include "dfrot/error.hpp"

namespace dfrot {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage: return "usage";
    case ErrorCode::invalid_data: return "invalid data";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::unsupported_dimension: return "unsupported dimension";
    case ErrorCode::not_orthogonal: return "not orthogonal";
    case ErrorCode::degenerate_input: return "degenerate input";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::bad_magic: return "bad magic";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::version_mismatch: return "version mismatch";
    case ErrorCode::io: return "io";
    case ErrorCode::invariance_failed: return "invariance check failed";
  }
  return "unknown";
}

int exit_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage:
      return exit_codes::usage;
    case ErrorCode::numerical:
      return exit_codes::numerical;
    case ErrorCode::invariance_failed:
      return exit_codes::invariance;
    default:
      return exit_codes::data;
  }
}

}  // namespace dfrot
