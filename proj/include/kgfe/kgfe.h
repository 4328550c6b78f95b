#ifndef KGFE_H
#define KGFE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define KGFE_API __declspec(dllexport)
#else
#define KGFE_API __attribute__((visibility("default")))
#endif

typedef enum kgfe_status {
  KGFE_OK = 0,
  KGFE_E_INVALID_ARGUMENT = 1,
  KGFE_E_IO = 2,
  KGFE_E_EMPTY_FILE = 3,
  KGFE_E_DUPLICATE_HEADER = 4,
  KGFE_E_TARGET_MISSING = 5,
  KGFE_E_TOO_FEW_ROWS = 6,
  KGFE_E_LENGTH_MISMATCH = 7,
  KGFE_E_KG_SYNTAX = 8,
  KGFE_E_KG_UNKNOWN_REFERENCE = 9,
  KGFE_E_KG_DUPLICATE = 10,
  KGFE_E_KG_SCORE_RANGE = 11,
  KGFE_E_AMBIGUOUS_MAPPING = 12,
  KGFE_E_CYCLE = 13,
  KGFE_E_DEGENERATE_METRIC = 14,
  KGFE_E_ALL_FOLDS_DEGENERATE = 15,
  KGFE_E_DIVERGENCE = 16,
  KGFE_E_BUDGET_EXCEEDED = 17,
  KGFE_E_CONFIG = 18,
  KGFE_E_INTERNAL = 19
} kgfe_status;

typedef struct kgfe_kb kgfe_kb;
typedef struct kgfe_dataset kgfe_dataset;

KGFE_API const char *kgfe_version(void);
/* Message of the last failed call on this thread; "" if none. */
KGFE_API const char *kgfe_last_error(void);
KGFE_API const char *kgfe_status_name(kgfe_status status);
/* Frees strings returned through char** out-parameters. */
KGFE_API void kgfe_string_free(char *s);

KGFE_API kgfe_status kgfe_kb_load(const char *path, kgfe_kb **out);
KGFE_API kgfe_status kgfe_kb_parse(const char *text, kgfe_kb **out);
KGFE_API void kgfe_kb_free(kgfe_kb *kb);
KGFE_API kgfe_status kgfe_kb_summary_json(const kgfe_kb *kb, char **out_json);
KGFE_API kgfe_status kgfe_kb_print(const kgfe_kb *kb, char **out_text);

/* task may be NULL, "auto", "regression" or "classification". */
KGFE_API kgfe_status kgfe_dataset_load_csv(const char *path, const char *target, const char *task,
                                           kgfe_dataset **out);
KGFE_API void kgfe_dataset_free(kgfe_dataset *d);
KGFE_API size_t kgfe_dataset_rows(const kgfe_dataset *d);
KGFE_API size_t kgfe_dataset_features(const kgfe_dataset *d);

KGFE_API kgfe_status kgfe_list_transforms(char **out_json);

/* counts[i] = number of transforms taking i+1 operands. The decimal count is
   written to out_decimal; out_value receives it when it fits in 64 bits
   (*out_fits set to 1), otherwise *out_fits is 0. */
KGFE_API kgfe_status kgfe_space_size(uint64_t p, const uint64_t *counts, size_t n_counts,
                                     char **out_decimal, uint64_t *out_value, int *out_fits);
/* Same, using the agent's transform catalog. */
KGFE_API kgfe_status kgfe_catalog_space_size(uint64_t p, char **out_decimal);

/* Job configuration is a JSON object; see the README for keys. */
KGFE_API kgfe_status kgfe_validate_config(const char *config_json, char **out_effective_json);
KGFE_API kgfe_status kgfe_run(const char *config_json, char **out_report_json);
KGFE_API kgfe_status kgfe_oracle(const char *config_json, unsigned depth, char **out_json);
KGFE_API kgfe_status kgfe_score_feature(const char *config_json, const char *expression,
                                        double *out_score);
KGFE_API kgfe_status kgfe_score_feature_graph(const char *graph_json_path, const char *name,
                                              double *out_score);

#ifdef __cplusplus
}
#endif

#endif
