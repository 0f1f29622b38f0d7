#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace understory {

// Every failure surfaced by the library carries one of these kinds so that
// callers (notably the CLI) can map it onto a stable exit code.
enum class ErrorKind {
  InvalidInput,   // precondition on an argument violated
  Io,             // file missing, unreadable, short
  Format,         // foreign magic, malformed text, bad structure
  Version,        // known magic, unsupported version
  Checksum,       // payload does not match its trailing checksum
  CountMismatch,  // e.g. image count != pose count
  ImageShape,     // non-square or inconsistent image sizes
  Invariant,      // a domain invariant failed at runtime
  Numeric,        // degenerate statistics, NaN, divergence
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

inline void require_input(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::InvalidInput, message);
}

}  // namespace understory
