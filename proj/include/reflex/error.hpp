#pragma once

#include <stdexcept>
#include <string>

namespace reflex {

enum class ErrorKind {
  config,
  input,
  shape,
  numeric,
  format,
  corruption,
  unsupported_format,
  scheme,
  degenerate,
  insufficient_signal,
  no_direction,
  dependency,
  io,
};

const char* to_string(ErrorKind kind);

/// Base exception for every failure raised by the engine. The kind drives
/// CLI exit codes and lets tests assert on the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Training diverged; carries the optimizer step at which the loss went bad.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : Error(ErrorKind::numeric, what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Missing upstream artifact; names the subcommand that produces it.
class DependencyError : public Error {
 public:
  DependencyError(std::string producer, const std::string& what)
      : Error(ErrorKind::dependency, what), producer_(std::move(producer)) {}

  const std::string& producer() const noexcept { return producer_; }

 private:
  std::string producer_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace reflex
