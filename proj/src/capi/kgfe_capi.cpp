#include "kgfe/kgfe.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "error.hpp"
#include "job.hpp"
#include "kg_store.hpp"
#include "search_env.hpp"
#include "tabular.hpp"
#include "transforms.hpp"

struct kgfe_kb {
  kgfe::KnowledgeBase kb;
};

struct kgfe_dataset {
  kgfe::Dataset data;
};

namespace {

thread_local std::string last_error;

kgfe_status to_status(kgfe::ErrorCode c) {
  using kgfe::ErrorCode;
  switch (c) {
  case ErrorCode::invalid_argument: return KGFE_E_INVALID_ARGUMENT;
  case ErrorCode::io_error: return KGFE_E_IO;
  case ErrorCode::empty_file: return KGFE_E_EMPTY_FILE;
  case ErrorCode::duplicate_header: return KGFE_E_DUPLICATE_HEADER;
  case ErrorCode::target_missing: return KGFE_E_TARGET_MISSING;
  case ErrorCode::too_few_rows: return KGFE_E_TOO_FEW_ROWS;
  case ErrorCode::length_mismatch: return KGFE_E_LENGTH_MISMATCH;
  case ErrorCode::kg_syntax: return KGFE_E_KG_SYNTAX;
  case ErrorCode::kg_unknown_reference: return KGFE_E_KG_UNKNOWN_REFERENCE;
  case ErrorCode::kg_duplicate: return KGFE_E_KG_DUPLICATE;
  case ErrorCode::kg_score_range: return KGFE_E_KG_SCORE_RANGE;
  case ErrorCode::ambiguous_mapping: return KGFE_E_AMBIGUOUS_MAPPING;
  case ErrorCode::cycle: return KGFE_E_CYCLE;
  case ErrorCode::degenerate_metric: return KGFE_E_DEGENERATE_METRIC;
  case ErrorCode::all_folds_degenerate: return KGFE_E_ALL_FOLDS_DEGENERATE;
  case ErrorCode::divergence: return KGFE_E_DIVERGENCE;
  case ErrorCode::budget_exceeded: return KGFE_E_BUDGET_EXCEEDED;
  case ErrorCode::config_invalid: return KGFE_E_CONFIG;
  case ErrorCode::internal: return KGFE_E_INTERNAL;
  }
  return KGFE_E_INTERNAL;
}

template <class F>
kgfe_status guard(F &&f) {
  try {
    f();
    last_error.clear();
    return KGFE_OK;
  } catch (const kgfe::Error &e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception &e) {
    last_error = std::string("invalid JSON: ") + e.what();
    return KGFE_E_CONFIG;
  } catch (const std::bad_alloc &) {
    last_error = "out of memory";
    return KGFE_E_INTERNAL;
  } catch (const std::exception &e) {
    last_error = e.what();
    return KGFE_E_INTERNAL;
  }
}

void require(bool ok, const char *what) {
  if (!ok) throw kgfe::Error(kgfe::ErrorCode::invalid_argument, what);
}

char *dup(const std::string &s) {
  char *p = static_cast<char *>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

kgfe::JobConfig parse_config(const char *json_text) {
  require(json_text != nullptr, "config JSON is null");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error &e) {
    throw kgfe::Error(kgfe::ErrorCode::config_invalid, std::string("config is not valid JSON: ") + e.what());
  }
  return kgfe::config_from_json(j);
}

} // namespace

extern "C" {

const char *kgfe_version(void) { return "1.0.0"; }

const char *kgfe_last_error(void) { return last_error.c_str(); }

const char *kgfe_status_name(kgfe_status status) {
  switch (status) {
  case KGFE_OK: return "ok";
  case KGFE_E_INVALID_ARGUMENT: return "invalid_argument";
  case KGFE_E_IO: return "io_error";
  case KGFE_E_EMPTY_FILE: return "empty_file";
  case KGFE_E_DUPLICATE_HEADER: return "duplicate_header";
  case KGFE_E_TARGET_MISSING: return "target_missing";
  case KGFE_E_TOO_FEW_ROWS: return "too_few_rows";
  case KGFE_E_LENGTH_MISMATCH: return "length_mismatch";
  case KGFE_E_KG_SYNTAX: return "kg_syntax";
  case KGFE_E_KG_UNKNOWN_REFERENCE: return "kg_unknown_reference";
  case KGFE_E_KG_DUPLICATE: return "kg_duplicate";
  case KGFE_E_KG_SCORE_RANGE: return "kg_score_range";
  case KGFE_E_AMBIGUOUS_MAPPING: return "ambiguous_mapping";
  case KGFE_E_CYCLE: return "cycle";
  case KGFE_E_DEGENERATE_METRIC: return "degenerate_metric";
  case KGFE_E_ALL_FOLDS_DEGENERATE: return "all_folds_degenerate";
  case KGFE_E_DIVERGENCE: return "divergence";
  case KGFE_E_BUDGET_EXCEEDED: return "budget_exceeded";
  case KGFE_E_CONFIG: return "config_invalid";
  case KGFE_E_INTERNAL: return "internal";
  }
  return "unknown";
}

void kgfe_string_free(char *s) { std::free(s); }

kgfe_status kgfe_kb_load(const char *path, kgfe_kb **out) {
  return guard([&] {
    require(path && out, "null argument");
    *out = nullptr;
    *out = new kgfe_kb{kgfe::parse_kg(path)};
  });
}

kgfe_status kgfe_kb_parse(const char *text, kgfe_kb **out) {
  return guard([&] {
    require(text && out, "null argument");
    *out = nullptr;
    *out = new kgfe_kb{kgfe::parse_kg_text(text)};
  });
}

void kgfe_kb_free(kgfe_kb *kb) { delete kb; }

kgfe_status kgfe_kb_summary_json(const kgfe_kb *kb, char **out_json) {
  return guard([&] {
    require(kb && out_json, "null argument");
    *out_json = dup(kgfe::kb_summary(kb->kb).dump(2));
  });
}

kgfe_status kgfe_kb_print(const kgfe_kb *kb, char **out_text) {
  return guard([&] {
    require(kb && out_text, "null argument");
    *out_text = dup(kgfe::print_kg(kb->kb));
  });
}

kgfe_status kgfe_dataset_load_csv(const char *path, const char *target, const char *task,
                                  kgfe_dataset **out) {
  return guard([&] {
    require(path && target && out, "null argument");
    *out = nullptr;
    kgfe::LoadOptions opts;
    opts.target = target;
    if (task && std::strcmp(task, "auto") != 0) {
      opts.task = kgfe::parse_task(task);
      if (!opts.task) throw kgfe::Error(kgfe::ErrorCode::config_invalid, std::string("unknown task '") + task + "'");
    }
    *out = new kgfe_dataset{kgfe::load_csv(path, opts)};
  });
}

void kgfe_dataset_free(kgfe_dataset *d) { delete d; }

size_t kgfe_dataset_rows(const kgfe_dataset *d) { return d ? d->data.n_rows() : 0; }

size_t kgfe_dataset_features(const kgfe_dataset *d) { return d ? d->data.p() : 0; }

kgfe_status kgfe_list_transforms(char **out_json) {
  return guard([&] {
    require(out_json != nullptr, "null argument");
    *out_json = dup(kgfe::catalog_json().dump(2));
  });
}

kgfe_status kgfe_space_size(uint64_t p, const uint64_t *counts, size_t n_counts, char **out_decimal,
                            uint64_t *out_value, int *out_fits) {
  return guard([&] {
    require(out_decimal && (counts || n_counts == 0), "null argument");
    std::map<size_t, uint64_t> by_operands;
    for (size_t i = 0; i < n_counts; ++i) by_operands[i + 1] = counts[i];
    auto size = kgfe::search_space_size(p, by_operands);
    *out_decimal = dup(size.decimal);
    if (out_value) *out_value = size.value.value_or(0);
    if (out_fits) *out_fits = size.value.has_value();
  });
}

kgfe_status kgfe_catalog_space_size(uint64_t p, char **out_decimal) {
  return guard([&] {
    require(out_decimal != nullptr, "null argument");
    auto actions = kgfe::builtin_catalog().actions();
    *out_decimal = dup(kgfe::search_space_size(p, actions).decimal);
  });
}

kgfe_status kgfe_validate_config(const char *config_json, char **out_effective_json) {
  return guard([&] {
    auto cfg = parse_config(config_json);
    kgfe::validate(cfg);
    if (out_effective_json) *out_effective_json = dup(kgfe::config_to_json(cfg).dump(2));
  });
}

kgfe_status kgfe_run(const char *config_json, char **out_report_json) {
  return guard([&] {
    auto report = kgfe::run(parse_config(config_json));
    if (out_report_json) *out_report_json = dup(report);
  });
}

kgfe_status kgfe_oracle(const char *config_json, unsigned depth, char **out_json) {
  return guard([&] {
    require(out_json != nullptr, "null argument");
    *out_json = dup(kgfe::run_oracle(parse_config(config_json), depth));
  });
}

kgfe_status kgfe_score_feature(const char *config_json, const char *expression, double *out_score) {
  return guard([&] {
    require(expression && out_score, "null argument");
    *out_score = kgfe::score_feature(parse_config(config_json), expression);
  });
}

kgfe_status kgfe_score_feature_graph(const char *graph_json_path, const char *name, double *out_score) {
  return guard([&] {
    require(graph_json_path && name && out_score, "null argument");
    std::ifstream f(graph_json_path, std::ios::binary);
    if (!f) throw kgfe::Error(kgfe::ErrorCode::io_error, std::string("cannot open ") + graph_json_path);
    std::stringstream ss;
    ss << f.rdbuf();
    *out_score = kgfe::score_feature_in_graph(ss.str(), name);
  });
}

} // extern "C"
