#pragma once

#include <stdexcept>
#include <string>

namespace topolab {

// Validation-class failures (bad parameters, malformed inputs, bad config).
// The CLI maps these to exit code 1.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// Runtime-class failures. The CLI maps these to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CycleError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class TractabilityError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class ShortfallError : public RuntimeFailure {
 public:
  ShortfallError(const std::string& what, std::size_t correct_found, std::size_t incorrect_found)
      : RuntimeFailure(what), correct_found_(correct_found), incorrect_found_(incorrect_found) {}
  std::size_t correct_found() const noexcept { return correct_found_; }
  std::size_t incorrect_found() const noexcept { return incorrect_found_; }

 private:
  std::size_t correct_found_;
  std::size_t incorrect_found_;
};

class NonFiniteGradient : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class BackendUnavailable : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class ProtocolError : public RuntimeFailure {
 public:
  ProtocolError(int status, std::string body)
      : RuntimeFailure("backend returned HTTP " + std::to_string(status) + ": " + body),
        status_(status),
        body_(std::move(body)) {}
  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

class MalformedResponse : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

class IoError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace topolab
