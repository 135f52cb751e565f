#include "advbench/error.hpp"

namespace advbench {

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::referential: return "referential";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::decode: return "decode";
    case ErrorCategory::argument: return "argument";
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::resolution: return "resolution";
    case ErrorCategory::undefined_metric: return "undefined-metric";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::decode:
    case ErrorCategory::resolution:
    case ErrorCategory::io:
      return 2;
    default:
      return 1;
  }
}

}  // namespace advbench
