#include "vlce/error.hpp"

namespace vlce {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kConflict: return "conflict error";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kCorruption: return "corruption error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kVocab: return "vocab error";
    case ErrorKind::kUndefinedSimilarity: return "undefined similarity";
    case ErrorKind::kNumeric: return "numeric failure";
    case ErrorKind::kIo: return "i/o error";
    case ErrorKind::kMissingArtifact: return "missing artifact";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kMissingArtifact:
      return 2;
    case ErrorKind::kNumeric:
      return 4;
    default:
      return 3;
  }
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace vlce
