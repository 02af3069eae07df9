#pragma once

#include <stdexcept>
#include <string>

namespace carfluents {

enum class ErrorKind {
  invalid_argument,  // caller broke a precondition
  io,                // file missing / unreadable / unwritable
  parse,             // malformed document or binary payload
  runtime,           // internal failure (divergence, inconsistency)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_invalid(const std::string& msg) {
  throw Error(ErrorKind::invalid_argument, msg);
}
[[noreturn]] inline void fail_io(const std::string& msg) { throw Error(ErrorKind::io, msg); }
[[noreturn]] inline void fail_parse(const std::string& msg) { throw Error(ErrorKind::parse, msg); }
[[noreturn]] inline void fail_runtime(const std::string& msg) {
  throw Error(ErrorKind::runtime, msg);
}

}  // namespace carfluents
