#include "causalkan/error.hpp"

namespace causalkan {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::input: return "input error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::config: return "config error";
    case ErrorKind::state: return "state error";
    case ErrorKind::data: return "data error";
    case ErrorKind::structure: return "structure error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::search: return "search error";
    case ErrorKind::degenerate_target: return "degenerate-target error";
    case ErrorKind::evaluation: return "evaluation error";
    case ErrorKind::render: return "render error";
    case ErrorKind::unsupported_order: return "unsupported-order error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace causalkan
