#include "chatd/error.hpp"

namespace chatd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kDanglingEdge: return "DanglingEdge";
    case ErrorCode::kUnknownNode: return "UnknownNode";
    case ErrorCode::kUnknownType: return "UnknownType";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kEmptySeeds: return "EmptySeeds";
    case ErrorCode::kSeedNotInGraph: return "SeedNotInGraph";
    case ErrorCode::kInvalidParams: return "InvalidParams";
    case ErrorCode::kTooFewGenes: return "TooFewGenes";
    case ErrorCode::kBackgroundTooSmall: return "BackgroundTooSmall";
    case ErrorCode::kMalformedDecomposition: return "MalformedDecomposition";
    case ErrorCode::kNoCandidates: return "NoCandidates";
    case ErrorCode::kAmbiguousPath: return "AmbiguousPath";
    case ErrorCode::kNoSchemaPath: return "NoSchemaPath";
    case ErrorCode::kProviderUnreachable: return "ProviderUnreachable";
    case ErrorCode::kMalformedResponse: return "MalformedResponse";
    case ErrorCode::kScriptExhausted: return "ScriptExhausted";
    case ErrorCode::kScriptMismatch: return "ScriptMismatch";
    case ErrorCode::kStreamInterrupted: return "StreamInterrupted";
    case ErrorCode::kInvalidToolArguments: return "InvalidToolArguments";
    case ErrorCode::kBackendUnreachable: return "BackendUnreachable";
    case ErrorCode::kIncompleteRegistry: return "IncompleteRegistry";
    case ErrorCode::kTranscriptMissing: return "TranscriptMissing";
    case ErrorCode::kUnknownKg: return "UnknownKG";
    case ErrorCode::kUnknownSession: return "UnknownSession";
    case ErrorCode::kSessionBusy: return "SessionBusy";
    case ErrorCode::kUnknownAnalysis: return "UnknownAnalysis";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

bool Error::is_provider_error() const noexcept {
  switch (code_) {
    case ErrorCode::kProviderUnreachable:
    case ErrorCode::kMalformedResponse:
    case ErrorCode::kScriptExhausted:
    case ErrorCode::kScriptMismatch:
    case ErrorCode::kStreamInterrupted:
      return true;
    default:
      return false;
  }
}

}  // namespace chatd
