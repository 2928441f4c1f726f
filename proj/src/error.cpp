#include "gameid/error.hpp"

namespace gameid {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::auth_rejected: return "auth_rejected";
    case ErrorCode::provider_unavailable: return "provider_unavailable";
    case ErrorCode::malformed_response: return "malformed_response";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::rate_limited: return "rate_limited";
    case ErrorCode::checksum_mismatch: return "checksum_mismatch";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::unknown_architecture: return "unknown_architecture";
    case ErrorCode::backbone_mismatch: return "backbone_mismatch";
    case ErrorCode::missing_pretrained_weights: return "missing_pretrained_weights";
    case ErrorCode::corrupt_artifact: return "corrupt_artifact";
    case ErrorCode::hash_mismatch: return "hash_mismatch";
    case ErrorCode::schema_version_mismatch: return "schema_version_mismatch";
    case ErrorCode::invariant_violation: return "invariant_violation";
    case ErrorCode::missing_image: return "missing_image";
    case ErrorCode::undecodable_image: return "undecodable_image";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::unknown_format: return "unknown_format";
    case ErrorCode::io_error: return "io_error";
  }
  return "unknown";
}

}  // namespace gameid
