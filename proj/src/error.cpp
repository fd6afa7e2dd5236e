#include "ivcate/error.hpp"

namespace ivcate {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::schema: return "schema";
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::argument: return "argument";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::weak_instrument: return "weak_instrument";
    case ErrorKind::no_identification: return "no_identification";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::collinearity: return "collinearity";
    case ErrorKind::internal: return "internal";
  }
  return "internal";
}

}  // namespace ivcate
