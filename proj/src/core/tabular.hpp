#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "units.hpp"

namespace kgfe {

enum class DType { numeric, categorical, datetime, geo_lat, geo_lon, boolean };
enum class Task { regression, classification };

const char *to_string(DType d);
std::optional<DType> parse_dtype(std::string_view s);
const char *to_string(Task t);
std::optional<Task> parse_task(std::string_view s);

// Numeric, boolean, geo and datetime share the double storage (datetime as
// epoch seconds, boolean as 0/1); categorical cells live in `labels`.
struct Column {
  std::string name;
  DType dtype = DType::numeric;
  std::vector<double> values;
  std::vector<std::string> labels;
  std::vector<uint8_t> present;
  std::string concept_name; // empty until annotated
  Unit unit;

  size_t size() const { return present.size(); }
  bool has(size_t row) const { return present[row] != 0; }
  bool is_numeric_like() const { return dtype != DType::categorical; }

  static Column numeric(std::string name, std::vector<std::optional<double>> cells);
  static Column categorical(std::string name, std::vector<std::optional<std::string>> cells);

  // Cell-for-cell equality of stored data (name and annotations ignored).
  bool same_cells(const Column &other) const;
};

using ColumnPtr = std::shared_ptr<const Column>;

struct NodeId {
  uint32_t value = 0;
  auto operator<=>(const NodeId &) const = default;
};

// Immutable table. Copies share column storage, so appending a feature
// produces a new Dataset without touching the original.
class Dataset {
public:
  Dataset() = default;
  Dataset(std::vector<Column> columns, std::string target, Task task);

  size_t n_rows() const { return n_rows_; }
  // Number of non-target columns.
  size_t p() const { return columns_.size() - 1; }
  Task task() const { return task_; }
  const std::string &target_name() const { return target_; }
  const Column &target() const;

  const std::vector<ColumnPtr> &columns() const { return columns_; }
  std::vector<const Column *> features() const;
  std::vector<std::string> feature_names() const;
  const Column *find(std::string_view name) const;

  const std::map<std::string, NodeId> &provenance() const { return provenance_; }
  std::optional<NodeId> origin(std::string_view name) const;

  // Unique name derived from `name` with the numeric suffix rule.
  std::string free_name(const std::string &name) const;

  Dataset append_feature(Column col, NodeId origin) const;
  Dataset with_column(size_t index, Column col) const;
  Dataset with_provenance(std::map<std::string, NodeId> prov) const;
  // Row subset, in the given order.
  Dataset select_rows(std::span<const size_t> rows) const;

  // Order-sensitive content hash over names, dtypes, annotations and cells.
  uint64_t hash() const;

private:
  std::vector<ColumnPtr> columns_;
  std::string target_;
  Task task_ = Task::regression;
  size_t n_rows_ = 0;
  std::map<std::string, NodeId> provenance_;
};

struct ColumnHint {
  std::optional<DType> dtype;
  std::optional<std::string> unit;
  std::optional<std::string> concept_name;
};
using SchemaHints = std::map<std::string, ColumnHint>;

SchemaHints parse_schema_hints(std::string_view json_text);

struct LoadOptions {
  std::string target;
  std::optional<Task> task; // inferred from the target dtype when absent
  SchemaHints hints;
};

// Inference constants.
inline constexpr double kNumericShare = 0.95;

Dataset load_csv(const std::string &path, const LoadOptions &opts);
Dataset parse_csv(std::string_view text, const LoadOptions &opts);
std::string write_csv(const Dataset &d);

std::vector<std::vector<std::string>> parse_csv_records(std::string_view text);
std::optional<double> parse_number(std::string_view cell);
std::optional<int64_t> parse_iso8601(std::string_view cell);
std::string format_number(double v);
std::string format_datetime(int64_t epoch_seconds);

struct CivilTime {
  int year, month, day, hour, minute, second, weekday; // weekday 0=Sunday
};
CivilTime civil_from_epoch(int64_t epoch_seconds);

struct FoldPlan {
  size_t k = 0;
  std::vector<uint32_t> assignments;
  uint64_t seed = 0;

  std::vector<size_t> train_rows(size_t fold) const;
  std::vector<size_t> test_rows(size_t fold) const;
};

FoldPlan make_folds(const Dataset &d, size_t k, uint64_t seed);

// Class labels of a classification target as strings (numbers formatted).
std::vector<std::string> target_labels(const Dataset &d);

} // namespace kgfe
