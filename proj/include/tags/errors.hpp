#pragma once

#include <stdexcept>
#include <string>

namespace tags {

/// Bad user input: malformed files, invalid configs, violated invariants.
/// The CLI maps it to exit code 1; every other exception maps to 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FormatErrorKind { kIo, kBadMagic, kVersionMismatch, kTruncated, kNonFinite, kParse };

inline const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kIo: return "io error";
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kVersionMismatch: return "version mismatch";
    case FormatErrorKind::kTruncated: return "truncated payload";
    case FormatErrorKind::kNonFinite: return "non-finite value";
    case FormatErrorKind::kParse: return "parse error";
  }
  return "unknown";
}

class FormatError : public ValidationError {
 public:
  FormatError(FormatErrorKind kind, const std::string& detail)
      : ValidationError(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}
  FormatErrorKind kind() const { return kind_; }

 private:
  FormatErrorKind kind_;
};

/// Training diverged or hit a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tags
