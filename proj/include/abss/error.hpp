#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace abss {

enum class ErrorKind {
  Io,
  Format,
  Truncation,
  Validation,
  Schema,
  Consistency,
  Shape,
  Usage,
  Index,
  Degenerate,
  Internal,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the engine carries a kind so callers (the CLI in
/// particular) can map it to an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace abss
