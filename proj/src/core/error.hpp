#pragma once

#include <stdexcept>
#include <string>

namespace kgfe {

enum class ErrorCode {
  invalid_argument,
  io_error,
  empty_file,
  duplicate_header,
  target_missing,
  too_few_rows,
  length_mismatch,
  kg_syntax,
  kg_unknown_reference,
  kg_duplicate,
  kg_score_range,
  ambiguous_mapping,
  cycle,
  degenerate_metric,
  all_folds_degenerate,
  divergence,
  budget_exceeded,
  config_invalid,
  internal,
};

const char *to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace kgfe
