#pragma once

#include <stdexcept>
#include <string>

namespace vlce {

enum class ErrorKind {
  kParse,
  kSchema,
  kConflict,
  kConfig,
  kFormat,
  kCorruption,
  kData,
  kShape,
  kVocab,
  kUndefinedSimilarity,
  kNumeric,
  kIo,
  kMissingArtifact,
};

const char* to_string(ErrorKind kind);

// All library failures are reported through this type. The kind decides the
// CLI exit code (see exit_code()).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

// 2 = configuration/usage, 3 = data, 4 = numeric failure.
int exit_code(ErrorKind kind);

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace vlce
