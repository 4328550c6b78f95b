#include "job.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "error.hpp"
#include "reasoner.hpp"

namespace kgfe {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad_key(const std::string &key, const std::string &why) {
  throw Error(ErrorCode::config_invalid, "config '" + key + "': " + why);
}

size_t get_count(const json &v, const std::string &key) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<int64_t>() < 0))
    bad_key(key, "expected a nonnegative integer");
  return v.get<size_t>();
}

double get_real(const json &v, const std::string &key) {
  if (!v.is_number()) bad_key(key, "expected a number");
  return v.get<double>();
}

std::string get_string(const json &v, const std::string &key) {
  if (!v.is_string()) bad_key(key, "expected a string");
  return v.get<std::string>();
}

std::string read_file(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io_error, "cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path &path, const std::string &content) {
  std::ofstream f(path, std::ios::binary);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  f.close();
  if (!f) throw Error(ErrorCode::io_error, "cannot write " + path.string());
}

json eval_json(const EvalResult &e) {
  return {{"metric", e.metric},
          {"mean", e.mean},
          {"per_fold", e.per_fold},
          {"n_features", e.n_features},
          {"skipped_folds", e.skipped_folds}};
}

json pipeline_json(const std::vector<PipelineStep> &steps) {
  json out = json::array();
  for (auto &s : steps) {
    json feats = json::array();
    for (auto &f : s.features)
      feats.push_back({{"name", f.name},
                       {"operands", f.operands},
                       {"interpretability", f.interpretability},
                       {"non_interpretable", f.non_interpretable}});
    out.push_back({{"transform", s.transform}, {"features", feats}});
  }
  return out;
}

json space_json(const SpaceSize &s) {
  if (s.value) return *s.value;
  return s.decimal;
}

Learner resolved_learner(const JobConfig &cfg, Task task) {
  Learner l = cfg.learner;
  l.kind = cfg.learner_kind ? *cfg.learner_kind : default_learner(task).kind;
  return l;
}

SearchConfig resolved_search(const JobConfig &cfg, Task task) {
  SearchConfig s = cfg.search;
  s.learner = resolved_learner(cfg, task);
  return s;
}

} // namespace

JobConfig config_from_json(const json &j, JobConfig cfg) {
  if (!j.is_object()) throw Error(ErrorCode::config_invalid, "config must be a JSON object");
  using Setter = std::function<void(const json &, const std::string &)>;
  SearchConfig &s = cfg.search;
  AgentParams &a = s.agent;
  const std::map<std::string, Setter> setters = {
      {"data", [&](auto &v, auto &k) { cfg.data = get_string(v, k); }},
      {"kg", [&](auto &v, auto &k) { cfg.kg = get_string(v, k); }},
      {"schema", [&](auto &v, auto &k) { cfg.schema = get_string(v, k); }},
      {"target", [&](auto &v, auto &k) { cfg.target = get_string(v, k); }},
      {"out", [&](auto &v, auto &k) { cfg.out = get_string(v, k); }},
      {"task", [&](auto &v, auto &k) {
         auto str = get_string(v, k);
         if (str == "auto") {
           cfg.task.reset();
           return;
         }
         cfg.task = parse_task(str);
         if (!cfg.task) bad_key(k, "expected regression, classification or auto");
       }},
      {"learner", [&](auto &v, auto &k) {
         auto str = get_string(v, k);
         if (str == "auto") {
           cfg.learner_kind.reset();
           return;
         }
         cfg.learner_kind = parse_learner(str);
         if (!cfg.learner_kind)
           bad_key(k, "expected decision_tree, linear_regression_ridge, logistic_regression or auto");
       }},
      {"k", [&](auto &v, auto &k) { s.k = get_count(v, k); }},
      {"lambda", [&](auto &v, auto &k) { s.lambda = get_real(v, k); }},
      {"episodes", [&](auto &v, auto &k) { s.episodes = get_count(v, k); }},
      {"m", [&](auto &v, auto &k) { s.m = get_count(v, k); }},
      {"top_k", [&](auto &v, auto &k) { s.top_k = get_count(v, k); }},
      {"seed", [&](auto &v, auto &k) { s.seed = get_count(v, k); }},
      {"bootstrap_rows", [&](auto &v, auto &k) { s.bootstrap_rows = get_count(v, k); }},
      {"drop_noninterp", [&](auto &v, auto &k) {
         if (!v.is_boolean()) bad_key(k, "expected true or false");
         s.drop_noninterp = v.template get<bool>();
       }},
      {"exploit_depth", [&](auto &v, auto &k) { cfg.exploit_depth = get_count(v, k); }},
      {"unknown_score", [&](auto &v, auto &k) { cfg.unknown_score = get_real(v, k); }},
      {"importance_repeats", [&](auto &v, auto &k) { cfg.importance_repeats = get_count(v, k); }},
      {"max_depth", [&](auto &v, auto &k) { cfg.learner.max_depth = static_cast<int>(get_count(v, k)); }},
      {"min_leaf", [&](auto &v, auto &k) { cfg.learner.min_leaf = get_count(v, k); }},
      {"ridge_alpha", [&](auto &v, auto &k) { cfg.learner.ridge_alpha = get_real(v, k); }},
      {"logistic_l2", [&](auto &v, auto &k) { cfg.learner.logistic_l2 = get_real(v, k); }},
      {"logistic_steps", [&](auto &v, auto &k) { cfg.learner.logistic_steps = get_count(v, k); }},
      {"hidden1", [&](auto &v, auto &k) { a.hidden1 = static_cast<int>(get_count(v, k)); }},
      {"hidden2", [&](auto &v, auto &k) { a.hidden2 = static_cast<int>(get_count(v, k)); }},
      {"lr", [&](auto &v, auto &k) { a.lr = get_real(v, k); }},
      {"batch", [&](auto &v, auto &k) { a.batch = get_count(v, k); }},
      {"gamma", [&](auto &v, auto &k) { a.gamma = get_real(v, k); }},
      {"sync_period", [&](auto &v, auto &k) { a.sync_period = get_count(v, k); }},
      {"replay_capacity", [&](auto &v, auto &k) { a.replay_capacity = get_count(v, k); }},
      {"eps0", [&](auto &v, auto &k) { a.eps0 = get_real(v, k); }},
      {"eps_min", [&](auto &v, auto &k) { a.eps_min = get_real(v, k); }},
      {"eps_decay", [&](auto &v, auto &k) { a.eps_decay = get_real(v, k); }},
  };
  for (auto &[key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorCode::config_invalid, "unknown config key '" + key + "'");
    it->second(value, key);
  }
  return cfg;
}

json config_to_json(const JobConfig &cfg) {
  const SearchConfig &s = cfg.search;
  const AgentParams &a = s.agent;
  return {
      {"data", cfg.data},
      {"kg", cfg.kg},
      {"schema", cfg.schema},
      {"target", cfg.target},
      {"task", cfg.task ? to_string(*cfg.task) : "auto"},
      {"learner", cfg.learner_kind ? to_string(*cfg.learner_kind) : "auto"},
      {"out", cfg.out},
      {"k", s.k},
      {"lambda", s.lambda},
      {"episodes", s.episodes},
      {"m", s.m},
      {"top_k", s.top_k},
      {"seed", s.seed},
      {"bootstrap_rows", s.bootstrap_rows},
      {"drop_noninterp", s.drop_noninterp},
      {"exploit_depth", cfg.exploit_depth},
      {"unknown_score", cfg.unknown_score},
      {"importance_repeats", cfg.importance_repeats},
      {"max_depth", cfg.learner.max_depth},
      {"min_leaf", cfg.learner.min_leaf},
      {"ridge_alpha", cfg.learner.ridge_alpha},
      {"logistic_l2", cfg.learner.logistic_l2},
      {"logistic_steps", cfg.learner.logistic_steps},
      {"hidden1", a.hidden1},
      {"hidden2", a.hidden2},
      {"lr", a.lr},
      {"batch", a.batch},
      {"gamma", a.gamma},
      {"sync_period", a.sync_period},
      {"replay_capacity", a.replay_capacity},
      {"eps0", a.eps0},
      {"eps_min", a.eps_min},
      {"eps_decay", a.eps_decay},
  };
}

void validate(const JobConfig &cfg) {
  if (cfg.data.empty()) throw Error(ErrorCode::config_invalid, "config 'data': a CSV path is required");
  if (cfg.target.empty()) throw Error(ErrorCode::config_invalid, "config 'target': a target column is required");
  if (cfg.out.empty()) throw Error(ErrorCode::config_invalid, "config 'out': an output directory is required");
  if (!(cfg.unknown_score >= 0 && cfg.unknown_score <= 1))
    throw Error(ErrorCode::config_invalid, "config 'unknown_score': must lie in [0,1]");
  if (cfg.exploit_depth == 0)
    throw Error(ErrorCode::config_invalid, "config 'exploit_depth': must be at least 1");
  if (cfg.importance_repeats == 0)
    throw Error(ErrorCode::config_invalid, "config 'importance_repeats': must be at least 1");
  SearchConfig s = cfg.search;
  s.learner = cfg.learner;
  validate(s);
  if (cfg.task && cfg.learner_kind) {
    if (*cfg.task == Task::classification && *cfg.learner_kind == LearnerKind::ridge)
      throw Error(ErrorCode::config_invalid, "config 'learner': ridge regression cannot fit a classification task");
    if (*cfg.task == Task::regression && *cfg.learner_kind == LearnerKind::logistic)
      throw Error(ErrorCode::config_invalid, "config 'learner': logistic regression cannot fit a regression task");
  }
}

Prepared prepare(const JobConfig &cfg) {
  validate(cfg);
  Prepared p;
  if (!cfg.kg.empty()) p.kb = parse_kg(cfg.kg);
  LoadOptions opts;
  opts.target = cfg.target;
  opts.task = cfg.task;
  if (!cfg.schema.empty()) opts.hints = parse_schema_hints(read_file(cfg.schema));
  p.raw = map_columns(p.kb, load_csv(cfg.data, opts));
  Task task = p.raw.task();
  if (cfg.learner_kind) {
    if (task == Task::classification && *cfg.learner_kind == LearnerKind::ridge)
      throw Error(ErrorCode::config_invalid, "config 'learner': ridge regression cannot fit a classification task");
    if (task == Task::regression && *cfg.learner_kind == LearnerKind::logistic)
      throw Error(ErrorCode::config_invalid, "config 'learner': logistic regression cannot fit a regression task");
  }
  p.exploited = exploit(p.raw, p.kb, {cfg.exploit_depth, cfg.unknown_score});
  return p;
}

std::string render_importance_svg(const std::vector<Importance> &ranking,
                                  const std::vector<bool> &generated) {
  constexpr int width = 800, height = 400, label_w = 300, top = 30, bar_max = 440;
  size_t shown = std::min<size_t>(ranking.size(), 20);
  double max_imp = 0;
  for (size_t i = 0; i < shown; ++i) max_imp = std::max(max_imp, ranking[i].importance);
  double row_h = shown ? (height - top - 10.0) / 20.0 : 0.0;
  auto escape = [](const std::string &s) {
    std::string o;
    for (char c : s) {
      switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
      }
    }
    return o;
  };
  auto fmt = [](double v, const char *pattern) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return std::string(buf);
  };
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  svg << "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">Permutation importance"
         " (blue: generated, orange: raw or knowledge-derived)</text>\n";
  for (size_t i = 0; i < shown; ++i) {
    double y = top + row_h * static_cast<double>(i);
    double w = max_imp > 0 ? std::max(0.0, ranking[i].importance) / max_imp * bar_max : 0.0;
    const char *color = generated[i] ? kGeneratedColor : kKnownColor;
    std::string label = ranking[i].feature;
    if (label.size() > 45) label = label.substr(0, 42) + "...";
    svg << "<text x=\"" << label_w - 6 << "\" y=\"" << fmt(y + row_h * 0.7, "%.1f")
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << escape(label) << "</text>\n";
    svg << "<rect x=\"" << label_w << "\" y=\"" << fmt(y + 1, "%.1f") << "\" width=\"" << fmt(w, "%.1f")
        << "\" height=\"" << fmt(row_h - 2, "%.1f") << "\" fill=\"" << color << "\"/>\n";
    svg << "<text x=\"" << fmt(label_w + w + 4, "%.1f") << "\" y=\"" << fmt(y + row_h * 0.7, "%.1f")
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(ranking[i].importance, "%.4f") << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

json kb_summary(const KnowledgeBase &kb) {
  return {{"concepts", kb.concepts.size()},
          {"units", kb.units.size()},
          {"mappings", kb.mappings.size()},
          {"derivation_rules", kb.derivations.size()},
          {"interpretability_rules", kb.interp_rules.size()},
          {"triples", kb.triples.size()},
          {"interp_weights", kb.resolved_weights()}};
}

json catalog_json() {
  json out = json::array();
  auto actions = builtin_catalog().actions();
  for (auto &t : builtin_catalog().transforms()) {
    json inputs = json::array();
    for (auto &dts : t.inputs) {
      json alts = json::array();
      for (auto d : dts) alts.push_back(to_string(d));
      inputs.push_back(alts);
    }
    bool action = std::find(actions.begin(), actions.end(), &t) != actions.end();
    out.push_back({{"id", t.id},
                   {"arity", to_string(t.arity)},
                   {"class", to_string(t.cls)},
                   {"inputs", inputs},
                   {"output", to_string(t.output)},
                   {"default_weight", TransformCatalog::default_weight(t.cls)},
                   {"agent_action", action}});
  }
  return out;
}

std::string run(const JobConfig &cfg) {
  using clock = std::chrono::steady_clock;
  std::vector<std::pair<std::string, double>> timings;
  auto t0 = clock::now();
  auto lap = [&](const char *name) {
    auto now = clock::now();
    timings.emplace_back(name, std::chrono::duration<double>(now - t0).count());
    t0 = now;
  };

  fs::path out(cfg.out);
  std::vector<fs::path> written;
  try {
    Prepared p = prepare(cfg);
    lap("load_and_exploit");
    Task task = p.raw.task();
    JobConfig eff = cfg;
    eff.task = task;
    Learner learner = resolved_learner(cfg, task);
    eff.learner_kind = learner.kind;
    SearchConfig search = resolved_search(cfg, task);

    FoldPlan folds = make_folds(p.raw, search.k, search.seed);
    EvalResult base = cross_val(p.raw, folds, learner);
    EvalResult exploited = cross_val(p.exploited.data, folds, learner);
    lap("baseline_evaluation");

    PipelineResult res = train(p.exploited.data, p.exploited.graph, p.kb, search);
    lap("search");

    const Dataset &final_data = res.best_dataset;
    const DecompositionGraph &graph = res.best_graph;
    EvalResult final_eval = cross_val(final_data, folds, learner);
    auto ranking = permutation_importance(final_data, learner, folds, cfg.importance_repeats, search.seed);
    lap("final_evaluation");

    std::vector<NodeId> feature_nodes;
    json per_feature = json::array();
    for (auto *c : final_data.features()) {
      NodeId id = *final_data.origin(c->name);
      feature_nodes.push_back(id);
      per_feature.push_back({{"name", c->name},
                             {"score", graph.interpretability(id)},
                             {"kind", to_string(graph.node(id).kind)}});
    }
    InterpSummary interp = dataset_interpretability(graph, feature_nodes);

    std::vector<bool> generated;
    json importance = json::array();
    for (auto &imp : ranking) {
      auto id = final_data.origin(imp.feature);
      bool gen = id && graph.node(*id).kind == NodeKind::generated;
      generated.push_back(gen);
      importance.push_back({{"feature", imp.feature}, {"importance", imp.importance}, {"generated", gen}});
    }

    json inference = json::array();
    for (auto &st : p.exploited.trace.steps)
      inference.push_back({{"rule", st.rule}, {"sources", st.sources}, {"produced", st.produced}});

    auto actions = builtin_catalog().actions();
    json report = {
        {"config", config_to_json(eff)},
        {"interp_weights", p.kb.resolved_weights()},
        {"dataset",
         {{"rows", p.raw.n_rows()},
          {"raw_features", p.raw.p()},
          {"exploited_features", p.exploited.data.p()},
          {"final_features", final_data.p()},
          {"target", p.raw.target_name()},
          {"task", to_string(task)}}},
        {"search_space_size", space_json(search_space_size(std::max<size_t>(p.exploited.data.p(), 1), actions))},
        {"base", eval_json(base)},
        {"exploited", eval_json(exploited)},
        {"final", eval_json(final_eval)},
        {"exploitation",
         {{"steps", inference},
          {"warnings", p.exploited.trace.warnings},
          {"depth_reached", p.exploited.trace.depth_reached}}},
        {"pipeline", pipeline_json(res.best_pipeline)},
        {"objective",
         {{"lambda", search.lambda},
          {"performance", res.performance},
          {"mean_interpretability", res.mean_interpretability},
          {"value", res.objective},
          {"best_episode", res.best_episode}}},
        {"traces", {{"performance", res.perf_trace}, {"interpretability", res.interp_trace}}},
        {"interpretability",
         {{"features", per_feature}, {"mean", interp.mean}, {"sum", interp.sum}, {"count", interp.count}}},
        {"importance", importance},
    };

    json log = json::array();
    for (size_t i = 0; i < res.log.size(); ++i) {
      const LogEntry &e = res.log[i];
      const StepRecord &r = res.ledger[i];
      log.push_back({{"episode", e.episode},
                     {"step", e.step},
                     {"epsilon", e.epsilon},
                     {"loss", e.loss ? json(*e.loss) : json(nullptr)},
                     {"reward", e.reward},
                     {"action", r.action},
                     {"transform", r.transform},
                     {"perf_before", r.perf_before},
                     {"perf_after", r.perf_after},
                     {"mean_interp_new", r.mean_interp_new},
                     {"new_features", r.new_features},
                     {"lambda", r.lambda},
                     {"objective", r.objective}});
    }
    lap("report");

    json timing_json = json::object();
    for (auto &[name, secs] : timings) timing_json[name] = secs;

    fs::create_directories(out);
    std::string report_text = report.dump(2) + "\n";
    std::vector<std::pair<std::string, std::string>> files = {
        {"report.json", report_text},
        {"augmented.csv", write_csv(final_data)},
        {"decomp.dot", graph.export_dot()},
        {"decomp.json", graph.export_json()},
        {"importance.svg", render_importance_svg(ranking, generated)},
        {"training_log.json", json{{"entries", log}}.dump(2) + "\n"},
        {"q_network.smfe", res.network ? res.network->serialize() : std::string()},
        {"timings.json", timing_json.dump(2) + "\n"},
    };
    for (auto &[name, content] : files) {
      written.push_back(out / name);
      write_file(out / name, content);
    }
    return report_text;
  } catch (...) {
    std::error_code ec;
    for (auto &f : written) fs::remove(f, ec);
    throw;
  }
}

std::string run_oracle(const JobConfig &cfg, size_t depth) {
  Prepared p = prepare(cfg);
  SearchConfig search = resolved_search(cfg, p.raw.task());
  auto res = exhaustive_oracle(p.exploited.data, p.exploited.graph, p.kb, depth, search);
  auto actions = builtin_catalog().actions();
  json j = {{"depth", depth},
            {"search_space_size", space_json(search_space_size(std::max<size_t>(p.exploited.data.p(), 1), actions))},
            {"sequences_evaluated", res.ledger.size()},
            {"objective", res.objective},
            {"performance", res.performance},
            {"mean_interpretability", res.mean_interpretability},
            {"pipeline", pipeline_json(res.best_pipeline)}};
  return j.dump(2);
}

namespace {

NodeId materialize(Dataset &d, DecompositionGraph &g, const KnowledgeBase &kb, const std::string &name) {
  if (d.find(name)) return *d.origin(name);
  auto parsed = parse_feature_name(name);
  if (!parsed) throw Error(ErrorCode::invalid_argument, "unknown feature '" + name + "'");
  const Transform *t = builtin_catalog().find(parsed->transform);
  if (!t) throw Error(ErrorCode::invalid_argument, "unknown transform '" + parsed->transform + "' in '" + name + "'");
  if (parsed->operands.size() != t->operand_count())
    throw Error(ErrorCode::invalid_argument, "'" + name + "': " + t->id + " expects " +
                                                 std::to_string(t->operand_count()) + " operands");
  std::vector<NodeId> operand_nodes;
  for (auto &op : parsed->operands) operand_nodes.push_back(materialize(d, g, kb, op));
  std::vector<const Column *> ops;
  for (size_t i = 0; i < parsed->operands.size(); ++i) {
    const Column *c = d.find(parsed->operands[i]);
    if (!t->accepts(i, c->dtype))
      throw Error(ErrorCode::invalid_argument, "'" + name + "': operand '" + c->name + "' has dtype " +
                                                   to_string(c->dtype) + ", not accepted by " + t->id);
    ops.push_back(c);
  }
  bool flagged = kb.non_interpretable(*t, ops);
  for (auto &col : apply(*t, ops, &kb, parsed->param)) {
    if (col.name != name) continue;
    NodeId id = g.add_application(t->id, operand_nodes, col.name, flagged);
    d = d.append_feature(std::move(col), id);
    return id;
  }
  throw Error(ErrorCode::invalid_argument, "'" + name + "' is not produced by " + t->id);
}

} // namespace

double score_feature(const JobConfig &cfg, const std::string &expression) {
  Prepared p = prepare(cfg);
  Dataset d = p.exploited.data;
  DecompositionGraph g = p.exploited.graph;
  return g.interpretability(materialize(d, g, p.kb, expression));
}

double score_feature_in_graph(const std::string &graph_json, const std::string &name) {
  auto g = DecompositionGraph::from_json(graph_json);
  auto id = g.find(name);
  if (!id) throw Error(ErrorCode::invalid_argument, "feature '" + name + "' is not in the graph");
  return g.interpretability(*id);
}

} // namespace kgfe
