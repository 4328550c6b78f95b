#include "tabular.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace kgfe {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<double> parse_bool(std::string_view cell) {
  auto s = lower(trim(cell));
  if (s == "1" || s == "true" || s == "yes") return 1.0;
  if (s == "0" || s == "false" || s == "no") return 0.0;
  return std::nullopt;
}

void fnv_mix(uint64_t &h, const void *data, size_t n) {
  auto *p = static_cast<const unsigned char *>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

} // namespace

const char *to_string(DType d) {
  switch (d) {
  case DType::numeric: return "numeric";
  case DType::categorical: return "categorical";
  case DType::datetime: return "datetime";
  case DType::geo_lat: return "geo_lat";
  case DType::geo_lon: return "geo_lon";
  case DType::boolean: return "boolean";
  }
  return "numeric";
}

std::optional<DType> parse_dtype(std::string_view s) {
  for (DType d : {DType::numeric, DType::categorical, DType::datetime,
                  DType::geo_lat, DType::geo_lon, DType::boolean})
    if (s == to_string(d)) return d;
  return std::nullopt;
}

const char *to_string(Task t) {
  return t == Task::regression ? "regression" : "classification";
}

std::optional<Task> parse_task(std::string_view s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  return std::nullopt;
}

Column Column::numeric(std::string name, std::vector<std::optional<double>> cells) {
  Column c;
  c.name = std::move(name);
  c.dtype = DType::numeric;
  c.values.resize(cells.size(), 0.0);
  c.present.resize(cells.size(), 0);
  for (size_t i = 0; i < cells.size(); ++i)
    if (cells[i] && std::isfinite(*cells[i])) {
      c.values[i] = *cells[i];
      c.present[i] = 1;
    }
  return c;
}

Column Column::categorical(std::string name,
                           std::vector<std::optional<std::string>> cells) {
  Column c;
  c.name = std::move(name);
  c.dtype = DType::categorical;
  c.labels.resize(cells.size());
  c.present.resize(cells.size(), 0);
  for (size_t i = 0; i < cells.size(); ++i)
    if (cells[i]) {
      c.labels[i] = *cells[i];
      c.present[i] = 1;
    }
  return c;
}

bool Column::same_cells(const Column &other) const {
  if (dtype != other.dtype || present != other.present) return false;
  for (size_t i = 0; i < size(); ++i) {
    if (!present[i]) continue;
    if (dtype == DType::categorical) {
      if (labels[i] != other.labels[i]) return false;
    } else if (values[i] != other.values[i]) {
      return false;
    }
  }
  return true;
}

Dataset::Dataset(std::vector<Column> columns, std::string target, Task task)
    : target_(std::move(target)), task_(task) {
  if (columns.empty())
    throw Error(ErrorCode::invalid_argument, "dataset has no columns");
  n_rows_ = columns.front().size();
  std::set<std::string> names;
  bool has_target = false;
  for (auto &c : columns) {
    if (c.size() != n_rows_)
      throw Error(ErrorCode::length_mismatch,
                  "column '" + c.name + "' has " + std::to_string(c.size()) +
                      " cells, expected " + std::to_string(n_rows_));
    if (!names.insert(c.name).second)
      throw Error(ErrorCode::duplicate_header, "duplicate column name '" + c.name + "'");
    has_target |= c.name == target_;
    columns_.push_back(std::make_shared<const Column>(std::move(c)));
  }
  if (!has_target)
    throw Error(ErrorCode::target_missing, "target column '" + target_ + "' not found");
  if (n_rows_ < 1) throw Error(ErrorCode::too_few_rows, "dataset has no rows");
  if (columns_.size() < 2)
    throw Error(ErrorCode::invalid_argument, "dataset needs at least one feature column");
}

const Column &Dataset::target() const { return *find(target_); }

std::vector<const Column *> Dataset::features() const {
  std::vector<const Column *> out;
  for (auto &c : columns_)
    if (c->name != target_) out.push_back(c.get());
  return out;
}

std::vector<std::string> Dataset::feature_names() const {
  std::vector<std::string> out;
  for (auto *c : features()) out.push_back(c->name);
  return out;
}

const Column *Dataset::find(std::string_view name) const {
  for (auto &c : columns_)
    if (c->name == name) return c.get();
  return nullptr;
}

std::optional<NodeId> Dataset::origin(std::string_view name) const {
  auto it = provenance_.find(std::string(name));
  if (it == provenance_.end()) return std::nullopt;
  return it->second;
}

std::string Dataset::free_name(const std::string &name) const {
  if (!find(name)) return name;
  for (size_t suffix = 2;; ++suffix) {
    std::string candidate = name + "_" + std::to_string(suffix);
    if (!find(candidate)) return candidate;
  }
}

Dataset Dataset::append_feature(Column col, NodeId origin) const {
  if (col.size() != n_rows_)
    throw Error(ErrorCode::length_mismatch,
                "feature '" + col.name + "' has " + std::to_string(col.size()) +
                    " cells, expected " + std::to_string(n_rows_));
  Dataset out = *this;
  col.name = free_name(col.name);
  out.provenance_[col.name] = origin;
  out.columns_.push_back(std::make_shared<const Column>(std::move(col)));
  return out;
}

Dataset Dataset::with_column(size_t index, Column col) const {
  if (col.size() != n_rows_)
    throw Error(ErrorCode::length_mismatch, "replacement column has wrong length");
  Dataset out = *this;
  out.columns_.at(index) = std::make_shared<const Column>(std::move(col));
  return out;
}

Dataset Dataset::with_provenance(std::map<std::string, NodeId> prov) const {
  Dataset out = *this;
  out.provenance_ = std::move(prov);
  return out;
}

Dataset Dataset::select_rows(std::span<const size_t> rows) const {
  Dataset out = *this;
  out.n_rows_ = rows.size();
  for (auto &cp : out.columns_) {
    Column c;
    c.name = cp->name;
    c.dtype = cp->dtype;
    c.concept_name = cp->concept_name;
    c.unit = cp->unit;
    c.present.reserve(rows.size());
    for (size_t r : rows) {
      c.present.push_back(cp->present[r]);
      if (cp->dtype == DType::categorical)
        c.labels.push_back(cp->labels[r]);
      else
        c.values.push_back(cp->values[r]);
    }
    cp = std::make_shared<const Column>(std::move(c));
  }
  return out;
}

uint64_t Dataset::hash() const {
  uint64_t h = 1469598103934665603ull;
  for (auto &c : columns_) {
    fnv_mix(h, c->name.data(), c->name.size());
    auto dt = static_cast<int>(c->dtype);
    fnv_mix(h, &dt, sizeof dt);
    fnv_mix(h, c->concept_name.data(), c->concept_name.size());
    auto u = unit_str(c->unit);
    fnv_mix(h, u.data(), u.size());
    fnv_mix(h, c->present.data(), c->present.size());
    fnv_mix(h, c->values.data(), c->values.size() * sizeof(double));
    for (auto &l : c->labels) fnv_mix(h, l.data(), l.size() + 1);
  }
  for (auto &[name, id] : provenance_) {
    fnv_mix(h, name.data(), name.size());
    fnv_mix(h, &id.value, sizeof id.value);
  }
  return h;
}

SchemaHints parse_schema_hints(std::string_view json_text) {
  SchemaHints hints;
  if (trim(json_text).empty()) return hints;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception &e) {
    throw Error(ErrorCode::config_invalid, std::string("schema hints: ") + e.what());
  }
  if (!j.is_object())
    throw Error(ErrorCode::config_invalid, "schema hints must be a JSON object");
  for (auto &[col, entry] : j.items()) {
    if (!entry.is_object())
      throw Error(ErrorCode::config_invalid, "schema hint for '" + col + "' must be an object");
    ColumnHint h;
    for (auto &[key, val] : entry.items()) {
      if (!val.is_string())
        throw Error(ErrorCode::config_invalid, "schema hint '" + col + "." + key + "' must be a string");
      auto s = val.get<std::string>();
      if (key == "dtype") {
        h.dtype = parse_dtype(s);
        if (!h.dtype)
          throw Error(ErrorCode::config_invalid, "unknown dtype '" + s + "' for column '" + col + "'");
      } else if (key == "unit") {
        h.unit = s;
      } else if (key == "concept") {
        h.concept_name = s;
      } else {
        throw Error(ErrorCode::config_invalid, "unknown schema hint key '" + key + "'");
      }
    }
    hints[col] = h;
  }
  return hints;
}

std::vector<std::vector<std::string>> parse_csv_records(std::string_view text) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false, field_started = false;
  size_t i = 0;
  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    bool blank = row.size() == 1 && row[0].empty();
    if (!blank) records.push_back(std::move(row));
    row.clear();
    field_started = false;
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else {
      field += c;
      field_started = true;
    }
    ++i;
  }
  if (in_quotes) throw Error(ErrorCode::invalid_argument, "unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return records;
}

std::optional<double> parse_number(std::string_view cell) {
  cell = trim(cell);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0;
  auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(v))
    return std::nullopt;
  return v;
}

std::optional<int64_t> parse_iso8601(std::string_view cell) {
  cell = trim(cell);
  auto digits = [&](size_t pos, size_t n) -> std::optional<int> {
    if (pos + n > cell.size()) return std::nullopt;
    int v = 0;
    for (size_t i = pos; i < pos + n; ++i) {
      if (cell[i] < '0' || cell[i] > '9') return std::nullopt;
      v = v * 10 + (cell[i] - '0');
    }
    return v;
  };
  if (cell.size() < 10 || cell[4] != '-' || cell[7] != '-') return std::nullopt;
  auto y = digits(0, 4), mo = digits(5, 2), d = digits(8, 2);
  if (!y || !mo || !d) return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  size_t pos = 10;
  if (pos < cell.size()) {
    if (cell[pos] != 'T' && cell[pos] != ' ') return std::nullopt;
    auto h = digits(pos + 1, 2);
    if (!h || pos + 3 >= cell.size() || cell[pos + 3] != ':') return std::nullopt;
    auto m = digits(pos + 4, 2);
    if (!m) return std::nullopt;
    hh = *h;
    mm = *m;
    pos += 6;
    if (pos < cell.size() && cell[pos] == ':') {
      auto s = digits(pos + 1, 2);
      if (!s) return std::nullopt;
      ss = *s;
      pos += 3;
      if (pos < cell.size() && cell[pos] == '.') {
        ++pos;
        size_t start = pos;
        while (pos < cell.size() && cell[pos] >= '0' && cell[pos] <= '9') ++pos;
        if (pos == start) return std::nullopt;
      }
    }
    if (pos < cell.size() && cell[pos] == 'Z') ++pos;
    if (pos != cell.size()) return std::nullopt;
  }
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  using namespace std::chrono;
  year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)},
                     day{static_cast<unsigned>(*d)}};
  if (!ymd.ok()) return std::nullopt;
  auto days = sys_days(ymd).time_since_epoch().count();
  return static_cast<int64_t>(days) * 86400 + hh * 3600 + mm * 60 + ss;
}

CivilTime civil_from_epoch(int64_t epoch_seconds) {
  using namespace std::chrono;
  int64_t days = epoch_seconds >= 0 ? epoch_seconds / 86400
                                    : -((-epoch_seconds + 86399) / 86400);
  int64_t secs = epoch_seconds - days * 86400;
  sys_days sd{std::chrono::days{days}};
  year_month_day ymd{sd};
  weekday wd{sd};
  return CivilTime{static_cast<int>(ymd.year()),
                   static_cast<int>(static_cast<unsigned>(ymd.month())),
                   static_cast<int>(static_cast<unsigned>(ymd.day())),
                   static_cast<int>(secs / 3600),
                   static_cast<int>((secs % 3600) / 60),
                   static_cast<int>(secs % 60),
                   static_cast<int>(wd.c_encoding())};
}

std::string format_number(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string format_datetime(int64_t epoch_seconds) {
  auto t = civil_from_epoch(epoch_seconds);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02d:%02d:%02d", t.year, t.month,
                t.day, t.hour, t.minute, t.second);
  return buf;
}

namespace {

Column build_column(const std::string &name, const std::vector<std::string_view> &cells,
                    const ColumnHint *hint) {
  size_t n = cells.size();
  std::optional<DType> dtype = hint ? hint->dtype : std::nullopt;
  if (!dtype) {
    size_t nonempty = 0, numeric = 0, dates = 0;
    for (auto cell : cells) {
      if (trim(cell).empty()) continue;
      ++nonempty;
      if (parse_number(cell)) ++numeric;
      else if (parse_iso8601(cell)) ++dates;
    }
    if (nonempty > 0 && numeric >= kNumericShare * static_cast<double>(nonempty))
      dtype = DType::numeric;
    else if (nonempty > 0 && dates == nonempty)
      dtype = DType::datetime;
    else
      dtype = DType::categorical;
  }
  Column c;
  c.name = name;
  c.dtype = *dtype;
  c.present.assign(n, 0);
  if (c.dtype == DType::categorical) {
    c.labels.resize(n);
    for (size_t i = 0; i < n; ++i)
      if (!trim(cells[i]).empty()) {
        c.labels[i] = std::string(cells[i]);
        c.present[i] = 1;
      }
  } else {
    c.values.assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      std::optional<double> v;
      switch (c.dtype) {
      case DType::datetime:
        if (auto t = parse_iso8601(cells[i])) v = static_cast<double>(*t);
        break;
      case DType::boolean: v = parse_bool(cells[i]); break;
      default: v = parse_number(cells[i]); break;
      }
      if (v) {
        c.values[i] = *v;
        c.present[i] = 1;
      }
    }
  }
  if (hint) {
    if (hint->concept_name) c.concept_name = *hint->concept_name;
    if (hint->unit) {
      c.unit = UnitExpr::parse(*hint->unit);
      if (!c.unit)
        throw Error(ErrorCode::config_invalid, "invalid unit '" + *hint->unit + "' for '" + name + "'");
    }
  }
  return c;
}

} // namespace

Dataset parse_csv(std::string_view text, const LoadOptions &opts) {
  auto records = parse_csv_records(text);
  if (records.empty()) throw Error(ErrorCode::empty_file, "CSV input is empty");
  const auto &header = records.front();
  std::set<std::string> seen;
  for (auto &h : header)
    if (!seen.insert(h).second)
      throw Error(ErrorCode::duplicate_header, "duplicate header '" + h + "'");
  auto target_it = std::find(header.begin(), header.end(), opts.target);
  if (opts.target.empty() || target_it == header.end())
    throw Error(ErrorCode::target_missing, "target column '" + opts.target + "' not found in header");
  if (records.size() < 3)
    throw Error(ErrorCode::too_few_rows, "CSV needs a header and at least 2 data rows");
  for (auto &h : opts.hints)
    if (!seen.count(h.first))
      throw Error(ErrorCode::config_invalid, "schema hint for unknown column '" + h.first + "'");

  size_t target_idx = static_cast<size_t>(target_it - header.begin());
  std::vector<size_t> rows;
  for (size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size())
      throw Error(ErrorCode::invalid_argument,
                  "CSV record " + std::to_string(r + 1) + " has " +
                      std::to_string(records[r].size()) + " fields, header has " +
                      std::to_string(header.size()));
    if (!trim(records[r][target_idx]).empty()) rows.push_back(r);
  }
  if (rows.size() < 2)
    throw Error(ErrorCode::too_few_rows, "fewer than 2 rows with a target value");

  std::vector<Column> cols;
  for (size_t j = 0; j < header.size(); ++j) {
    std::vector<std::string_view> cells;
    cells.reserve(rows.size());
    for (size_t r : rows) cells.push_back(records[r][j]);
    auto hit = opts.hints.find(header[j]);
    cols.push_back(build_column(header[j], cells, hit == opts.hints.end() ? nullptr : &hit->second));
  }
  const Column &tgt = cols[target_idx];
  Task task;
  if (opts.task) {
    task = *opts.task;
  } else {
    task = (tgt.dtype == DType::categorical || tgt.dtype == DType::boolean)
               ? Task::classification
               : Task::regression;
  }
  if (task == Task::regression && !(tgt.dtype == DType::numeric))
    throw Error(ErrorCode::config_invalid, "regression target '" + opts.target + "' is not numeric");
  if (std::count(tgt.present.begin(), tgt.present.end(), 1) != static_cast<long>(tgt.size()))
    throw Error(ErrorCode::invalid_argument, "target '" + opts.target + "' has unparseable cells");
  return Dataset(std::move(cols), opts.target, task);
}

Dataset load_csv(const std::string &path, const LoadOptions &opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::io_error, "error reading '" + path + "'");
  return parse_csv(ss.str(), opts);
}

std::string write_csv(const Dataset &d) {
  auto quote = [](const std::string &s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  };
  std::string out;
  const auto &cols = d.columns();
  for (size_t j = 0; j < cols.size(); ++j) {
    if (j) out += ',';
    out += quote(cols[j]->name);
  }
  out += '\n';
  for (size_t i = 0; i < d.n_rows(); ++i) {
    for (size_t j = 0; j < cols.size(); ++j) {
      if (j) out += ',';
      const Column &c = *cols[j];
      if (!c.has(i)) continue;
      switch (c.dtype) {
      case DType::categorical: out += quote(c.labels[i]); break;
      case DType::datetime: out += format_datetime(static_cast<int64_t>(c.values[i])); break;
      default: out += format_number(c.values[i]); break;
      }
    }
    out += '\n';
  }
  return out;
}

std::vector<size_t> FoldPlan::train_rows(size_t fold) const {
  std::vector<size_t> rows;
  for (size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] != fold) rows.push_back(i);
  return rows;
}

std::vector<size_t> FoldPlan::test_rows(size_t fold) const {
  std::vector<size_t> rows;
  for (size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == fold) rows.push_back(i);
  return rows;
}

std::vector<std::string> target_labels(const Dataset &d) {
  const Column &t = d.target();
  std::vector<std::string> out(d.n_rows());
  for (size_t i = 0; i < d.n_rows(); ++i)
    out[i] = t.dtype == DType::categorical ? t.labels[i] : format_number(t.values[i]);
  return out;
}

FoldPlan make_folds(const Dataset &d, size_t k, uint64_t seed) {
  size_t n = d.n_rows();
  if (k < 2) throw Error(ErrorCode::invalid_argument, "k must be at least 2");
  if (k > n)
    throw Error(ErrorCode::invalid_argument,
                "k=" + std::to_string(k) + " exceeds row count " + std::to_string(n));
  std::mt19937_64 rng(seed);
  std::vector<size_t> order;
  order.reserve(n);

  bool stratified = false;
  if (d.task() == Task::classification) {
    auto labels = target_labels(d);
    std::map<std::string, std::vector<size_t>> groups;
    for (size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
    stratified = std::all_of(groups.begin(), groups.end(),
                             [k](auto &g) { return g.second.size() >= k; });
    if (stratified)
      for (auto &[label, rows] : groups) {
        std::shuffle(rows.begin(), rows.end(), rng);
        order.insert(order.end(), rows.begin(), rows.end());
      }
  }
  if (!stratified) {
    order.resize(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
  }
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(n, 0);
  for (size_t i = 0; i < n; ++i) plan.assignments[order[i]] = static_cast<uint32_t>(i % k);
  return plan;
}

} // namespace kgfe
