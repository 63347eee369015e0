#pragma once

#include <stdexcept>
#include <string>

namespace ssm {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

enum class ParseErrorKind {
  io,
  bad_magic,
  bad_version,
  bad_header,
  truncated,
  size_mismatch,
};

const char* to_string(ParseErrorKind kind);

class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ParseErrorKind kind() const noexcept { return kind_; }

 private:
  ParseErrorKind kind_;
};

inline const char* to_string(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::io: return "io error";
    case ParseErrorKind::bad_magic: return "bad magic";
    case ParseErrorKind::bad_version: return "bad version";
    case ParseErrorKind::bad_header: return "bad header";
    case ParseErrorKind::truncated: return "truncated payload";
    case ParseErrorKind::size_mismatch: return "header/payload size mismatch";
  }
  return "parse error";
}

}  // namespace ssm
