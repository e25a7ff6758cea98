#pragma once

#include <stdexcept>
#include <string>

namespace genstereo {

enum class ErrorKind {
  format,      // malformed header / magic / schema
  length,      // truncated or oversized payload
  shape,       // dims or channel mismatch
  domain,      // argument outside the accepted range
  degenerate,  // input valid in type but unusable (all-invalid map, max 0, ...)
  io,          // filesystem failure
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::format: return "format";
    case ErrorKind::length: return "length";
    case ErrorKind::shape: return "shape";
    case ErrorKind::domain: return "domain";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::io: return "io";
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

// Error raised from inside a named pipeline stage; keeps the original kind.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& inner)
      : Error(inner.kind(), "[" + stage + "] " + inner.what()),
        stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace genstereo
