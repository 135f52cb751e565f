#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace advbench {

enum class ErrorCategory {
  parse,
  referential,
  validation,
  decode,
  argument,
  shape,
  numeric,
  resolution,
  undefined_metric,
  io,
};

std::string_view to_string(ErrorCategory category);

/// Exit code contract of the command-line tool: 1 for validation-class
/// failures, 2 for failures reaching the filesystem or decoders.
int exit_code_for(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace advbench
