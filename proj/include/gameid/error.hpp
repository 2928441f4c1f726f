#pragma once

#include <stdexcept>
#include <string>

namespace gameid {

enum class ErrorCode {
  auth_rejected,
  provider_unavailable,
  malformed_response,
  not_found,
  rate_limited,
  checksum_mismatch,
  infeasible,
  unknown_architecture,
  backbone_mismatch,
  missing_pretrained_weights,
  corrupt_artifact,
  hash_mismatch,
  schema_version_mismatch,
  invariant_violation,
  missing_image,
  undecodable_image,
  invalid_argument,
  unknown_format,
  io_error,
};

const char* error_code_name(ErrorCode code);

// Domain error carrying a stable machine-readable code. The CLI prints
// {"error":{"code":...,"message":...}} on failure, so codes are part of the
// external interface and must not be renamed casually.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }
  const char* code_name() const { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace gameid
