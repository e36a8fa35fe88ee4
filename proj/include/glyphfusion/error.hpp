#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace glyphfusion {

enum class ErrorKind {
  kInvalidArgument,
  kMissingGlyph,
  kDecodeFailure,
  kEmptyCorpus,
  kTooFewFonts,
  kShapeMismatch,
  kDimensionMismatch,
  kStepOutOfRange,
  kDivergence,
  kTooFewPoints,
  kIncompleteTriple,
  kMissingPrerequisite,
  kEncoderMismatch,
  kConfig,
  kIo,
  kLocked,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) raise(kind, what);
}

// Minimal leveled logging to stderr; GLYPHFUSION_LOG=quiet silences info lines.
void log_info(const std::string& msg);
void log_warn(const std::string& msg);

}  // namespace glyphfusion
