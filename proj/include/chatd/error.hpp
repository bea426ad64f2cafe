#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chatd {

enum class ErrorCode {
  // kg
  kParseError,
  kSchemaViolation,
  kDanglingEdge,
  kUnknownNode,
  kUnknownType,
  // netmed
  kDomainError,
  kEmptySeeds,
  kSeedNotInGraph,
  kInvalidParams,
  // coherence
  kTooFewGenes,
  kBackgroundTooSmall,
  // query engine
  kMalformedDecomposition,
  kNoCandidates,
  kAmbiguousPath,
  kNoSchemaPath,
  // llm provider
  kProviderUnreachable,
  kMalformedResponse,
  kScriptExhausted,
  kScriptMismatch,
  kStreamInterrupted,
  kInvalidToolArguments,
  // research
  kBackendUnreachable,
  // orchestrator
  kIncompleteRegistry,
  // eval
  kTranscriptMissing,
  // service
  kUnknownKg,
  kUnknownSession,
  kSessionBusy,
  kUnknownAnalysis,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Base exception for every recoverable failure in the workbench. The code
/// identifies the contract-level error; what() carries the human detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// True for the provider family (unreachable, malformed, script issues).
  bool is_provider_error() const noexcept;

 private:
  ErrorCode code_;
};

}  // namespace chatd
