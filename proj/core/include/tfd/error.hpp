#pragma once

#include <stdexcept>
#include <string>

namespace tfd {

// Error category drives the CLI exit code and the one-line
// machine-parseable prefix ("error/<category>: ...").
enum class ErrorKind {
  Config,   // bad or inconsistent configuration
  Prereq,   // required artifact from an earlier stage is missing
  Format,   // artifact exists but is malformed (version, truncation, schema)
  Io,       // filesystem failure
  Invalid,  // precondition violation on an operation input
  Internal, // everything else
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  const char* category() const {
    switch (kind_) {
      case ErrorKind::Config: return "config";
      case ErrorKind::Prereq: return "prereq";
      case ErrorKind::Format: return "format";
      case ErrorKind::Io: return "io";
      case ErrorKind::Invalid: return "invalid";
      case ErrorKind::Internal: return "internal";
    }
    return "internal";
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool cond, ErrorKind kind, const std::string& message) {
  if (!cond) fail(kind, message);
}

}  // namespace tfd
