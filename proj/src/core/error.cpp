#include "error.hpp"

namespace kgfe {

const char *to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::invalid_argument: return "invalid_argument";
  case ErrorCode::io_error: return "io_error";
  case ErrorCode::empty_file: return "empty_file";
  case ErrorCode::duplicate_header: return "duplicate_header";
  case ErrorCode::target_missing: return "target_missing";
  case ErrorCode::too_few_rows: return "too_few_rows";
  case ErrorCode::length_mismatch: return "length_mismatch";
  case ErrorCode::kg_syntax: return "kg_syntax";
  case ErrorCode::kg_unknown_reference: return "kg_unknown_reference";
  case ErrorCode::kg_duplicate: return "kg_duplicate";
  case ErrorCode::kg_score_range: return "kg_score_range";
  case ErrorCode::ambiguous_mapping: return "ambiguous_mapping";
  case ErrorCode::cycle: return "cycle";
  case ErrorCode::degenerate_metric: return "degenerate_metric";
  case ErrorCode::all_folds_degenerate: return "all_folds_degenerate";
  case ErrorCode::divergence: return "divergence";
  case ErrorCode::budget_exceeded: return "budget_exceeded";
  case ErrorCode::config_invalid: return "config_invalid";
  case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

} // namespace kgfe
