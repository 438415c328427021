#include "abss/error.hpp"

namespace abss {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Truncation: return "truncation error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Consistency: return "consistency error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Usage: return "usage error";
    case ErrorKind::Index: return "index error";
    case ErrorKind::Degenerate: return "degenerate-sample error";
    case ErrorKind::Internal: return "internal invariant violation";
  }
  return "error";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(to_string(kind)) + ": " + message);
}

}  // namespace abss
