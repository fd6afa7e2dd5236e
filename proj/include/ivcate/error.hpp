#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ivcate {

enum class ErrorKind {
  schema,
  parse,
  validation,
  argument,
  numerical,
  weak_instrument,
  no_identification,
  configuration,
  collinearity,
  internal,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace ivcate
