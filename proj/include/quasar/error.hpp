#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace quasar {

enum class ErrorKind {
  parse,
  unsupported,
  lowering,
  validation,
  eval,
  budget,
  conformal,
  replay_miss,
  environment,
  rejected,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::lowering: return "lowering";
    case ErrorKind::validation: return "validation";
    case ErrorKind::eval: return "eval";
    case ErrorKind::budget: return "budget";
    case ErrorKind::conformal: return "conformal";
    case ErrorKind::replay_miss: return "replay-miss";
    case ErrorKind::environment: return "environment";
    case ErrorKind::rejected: return "rejected";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Error with a 1-based source position. Used by both the IR text reader and
/// the source parser.
class PositionedError : public Error {
 public:
  PositionedError(ErrorKind kind, std::size_t line, std::size_t col,
                  std::string code, std::string message)
      : Error(kind, std::to_string(line) + ":" + std::to_string(col) + ": " +
                        code + ": " + message),
        line_(line),
        col_(col),
        code_(std::move(code)),
        message_(std::move(message)) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t col() const noexcept { return col_; }
  const std::string& code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::size_t line_;
  std::size_t col_;
  std::string code_;
  std::string message_;
};

}  // namespace quasar
