#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zidyad {

/// Coarse error classes; the CLI reports these as machine-readable tags.
enum class ErrorCategory {
  data,         // dataset content violates an invariant
  schema,       // column roles, names or file layout mismatch
  config,       // invalid configuration or option values
  numeric,      // dimension mismatch, non-SPD matrix, non-finite values
  convergence,  // optimizer or sampler did not converge / exceeded budget
  io,           // file system or parse failure
};

std::string_view to_string(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

inline std::string_view to_string(ErrorCategory c) noexcept {
  switch (c) {
    case ErrorCategory::data: return "data";
    case ErrorCategory::schema: return "schema";
    case ErrorCategory::config: return "config";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::convergence: return "convergence";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

}  // namespace zidyad
