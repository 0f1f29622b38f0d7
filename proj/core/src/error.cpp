#include "understory/error.hpp"

namespace understory {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid_input";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Version: return "version";
    case ErrorKind::Checksum: return "checksum";
    case ErrorKind::CountMismatch: return "count_mismatch";
    case ErrorKind::ImageShape: return "image_shape";
    case ErrorKind::Invariant: return "invariant";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace understory
