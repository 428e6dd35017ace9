#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace causalkan {

enum class ErrorKind {
  input,
  shape,
  numeric,
  config,
  state,
  data,
  structure,
  parse,
  search,
  degenerate_target,
  evaluation,
  render,
  unsupported_order,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base exception for every failure raised by the library. The kind lets
/// callers (and tests) distinguish contract violations without a class
/// hierarchy per error.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace causalkan
