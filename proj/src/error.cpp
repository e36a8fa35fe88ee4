#include "glyphfusion/error.hpp"

#include <cstdlib>
#include <cstring>
#include <iostream>

namespace glyphfusion {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kMissingGlyph: return "missing-glyph";
    case ErrorKind::kDecodeFailure: return "decode-failure";
    case ErrorKind::kEmptyCorpus: return "empty-corpus";
    case ErrorKind::kTooFewFonts: return "too-few-fonts";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kDimensionMismatch: return "dimension-mismatch";
    case ErrorKind::kStepOutOfRange: return "step-out-of-range";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kTooFewPoints: return "too-few-points";
    case ErrorKind::kIncompleteTriple: return "incomplete-triple";
    case ErrorKind::kMissingPrerequisite: return "missing-prerequisite";
    case ErrorKind::kEncoderMismatch: return "encoder-mismatch";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kLocked: return "locked";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void raise(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

namespace {
bool quiet() {
  const char* v = std::getenv("GLYPHFUSION_LOG");
  return v != nullptr && std::strcmp(v, "quiet") == 0;
}
}  // namespace

void log_info(const std::string& msg) {
  if (!quiet()) std::clog << "[glyphfusion] " << msg << '\n';
}

void log_warn(const std::string& msg) { std::clog << "[glyphfusion] warning: " << msg << '\n'; }

}  // namespace glyphfusion
