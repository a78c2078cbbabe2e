#pragma once

// Experiment configuration: JSON parsing with strict key checking, task
// construction from the benchmark section, and a stable config hash.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clreg/analysis.hpp"
#include "clreg/continual.hpp"
#include "clreg/data.hpp"
#include "clreg/error.hpp"
#include "clreg/idx.hpp"

namespace clreg {

using Json = nlohmann::json;

enum class BenchmarkKind { synthetic, mnist };
enum class Scenario { permuted, split };

struct BenchmarkConfig {
  BenchmarkKind kind = BenchmarkKind::synthetic;
  Scenario scenario = Scenario::permuted;
  std::size_t n_tasks = 3;
  std::size_t classes_per_task = 2;  // split only
  std::string data_dir;              // mnist; empty falls back to CLREG_DATA_DIR
  std::size_t train_subset = 0;      // 0 keeps every training example
  std::size_t test_subset = 0;
  std::uint64_t task_seed = 1;  // permutation seeds derive from this; task 0 is unpermuted
  SyntheticSpec synthetic{};
};

struct GridConfig {
  std::vector<double> a{1, 2, 5};
  int i_min = -2;
  int i_max = 2;
  std::vector<bool> reinit{true, false};
  bool validation = true;  // evaluate on the held-out tail of each training set
};

struct CorrelateConfig {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t subsample = 100000;
  bool exclude_zeros = false;
};

struct ExperimentConfig {
  BenchmarkConfig benchmark{};
  ContinualConfig run{};
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "out";
  GridConfig grid{};
  NoiseSettings noise{};
  CorrelateConfig correlate{};
  Json resolved;  // canonical echo of every setting after defaults and overrides
};

namespace detail {

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_size(const Json& obj, const char* key, std::size_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ConfigError(where + "." + key + " must be a nonnegative integer");
  }
  if (v.is_number_integer() && v.get<std::int64_t>() < 0) throw ConfigError(where + "." + key + " must be nonnegative");
  out = v.get<std::size_t>();
}

inline void read_double(const Json& obj, const char* key, double& out, const std::string& where) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number()) throw ConfigError(where + "." + key + " must be a number");
  out = obj.at(key).get<double>();
}

}  // namespace detail

inline std::string_view to_string(BenchmarkKind k) { return k == BenchmarkKind::synthetic ? "synthetic" : "mnist"; }
inline std::string_view to_string(Scenario s) { return s == Scenario::permuted ? "permuted" : "split"; }
inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

/// Canonical JSON of a config; this is what gets echoed and hashed.
inline Json to_json(const ExperimentConfig& c) {
  const auto& b = c.benchmark;
  const auto& r = c.run;
  Json j;
  j["benchmark"] = {
      {"kind", to_string(b.kind)},
      {"scenario", to_string(b.scenario)},
      {"n_tasks", b.n_tasks},
      {"classes_per_task", b.classes_per_task},
      {"data_dir", b.data_dir},
      {"train_subset", b.train_subset},
      {"test_subset", b.test_subset},
      {"task_seed", b.task_seed},
      {"synthetic",
       {{"seed", b.synthetic.seed},
        {"dim", b.synthetic.dim},
        {"n_classes", b.synthetic.n_classes},
        {"n_per_class", b.synthetic.n_per_class},
        {"n_test_per_class", b.synthetic.n_test_per_class},
        {"cluster_spread", b.synthetic.cluster_spread},
        {"active_fraction", b.synthetic.active_fraction}}},
  };
  j["architecture"] = {{"hidden", r.hidden}, {"multi_head", r.multi_head}};
  j["optimizer"] = {
      {"kind", to_string(r.optimizer.kind)},
      {"lr", r.optimizer.kind == OptimizerKind::adam ? r.optimizer.adam.lr : r.optimizer.sgd.lr},
      {"beta1", r.optimizer.adam.beta1},
      {"beta2", r.optimizer.adam.beta2},
      {"eps", r.optimizer.adam.eps},
      {"bias_correction", r.optimizer.adam.bias_correction},
      {"momentum", r.optimizer.sgd.momentum},
  };
  j["continual"] = {
      {"method", to_string(r.method)},  {"c", r.c},
      {"xi", r.measures.xi},            {"reinit", r.reinit},
      {"epochs", r.train.epochs},       {"batch_size", r.train.batch_size},
      {"steps", r.train.steps},
  };
  Json tracked = Json::array();
  for (Measure m : r.tracked) tracked.push_back(to_string(m));
  j["measures"] = tracked;
  const auto& ms = r.measures;
  j["measure_settings"] = {
      {"posthoc_samples", ms.posthoc_samples},
      {"label_draws", ms.label_draws},
      {"batch_ef_batch", ms.batch_ef_batch},
      {"batch_ef_batches", ms.batch_ef_batches},
      {"ema_decay", ms.ema_decay},
      {"sos_alpha", ms.sos_alpha_mode == SosAlphaMode::formula ? Json("formula") : Json(ms.sos_alpha)},
  };
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["grid"] = {{"a", c.grid.a},
               {"i_min", c.grid.i_min},
               {"i_max", c.grid.i_max},
               {"reinit", c.grid.reinit},
               {"validation", c.grid.validation}};
  j["noise"] = {{"batch_size", c.noise.batch_size},
                {"steps", c.noise.steps},
                {"record_every", c.noise.record_every},
                {"thresholds", c.noise.thresholds}};
  Json pairs = Json::array();
  for (const auto& [a, bb] : c.correlate.pairs) pairs.push_back({a, bb});
  j["correlate"] = {{"pairs", pairs}, {"subsample", c.correlate.subsample}, {"exclude_zeros", c.correlate.exclude_zeros}};
  return j;
}

inline void validate(const ExperimentConfig& c) {
  const auto& b = c.benchmark;
  const auto& r = c.run;
  if (b.n_tasks == 0) throw ConfigError("benchmark.n_tasks must be positive");
  if (b.scenario == Scenario::split && !r.multi_head) {
    throw ConfigError("split tasks are task-incremental and need architecture.multi_head = true");
  }
  if (!(r.c >= 0.0)) throw ConfigError("continual.c must be nonnegative");
  if (!(r.measures.xi > 0.0)) throw ConfigError("continual.xi must be positive");
  if (r.train.batch_size == 0) throw ConfigError("continual.batch_size must be positive");
  if (r.train.epochs == 0 && r.train.steps == 0) throw ConfigError("continual.epochs or continual.steps must be positive");
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (r.measures.posthoc_samples == 0) throw ConfigError("measure_settings.posthoc_samples must be positive");
  if (r.measures.label_draws == 0) throw ConfigError("measure_settings.label_draws must be positive");
  if (r.measures.batch_ef_batch == 0) throw ConfigError("measure_settings.batch_ef_batch must be positive");
  if (!(r.measures.ema_decay >= 0.0 && r.measures.ema_decay < 1.0)) {
    throw ConfigError("measure_settings.ema_decay must lie in [0, 1)");
  }
  const double lr = r.optimizer.kind == OptimizerKind::adam ? r.optimizer.adam.lr : r.optimizer.sgd.lr;
  if (!(lr >= 0.0)) throw ConfigError("optimizer.lr must be nonnegative");
  if (c.grid.a.empty() || c.grid.i_min > c.grid.i_max || c.grid.reinit.empty()) throw ConfigError("grid is empty");
  if (c.noise.batch_size == 0 || c.noise.record_every == 0) throw ConfigError("noise settings must be positive");
  for (const auto& [x, y] : c.correlate.pairs) {
    (void)parse_measure(x);
    (void)parse_measure(y);
  }
}

/// Parses a config object; any key not listed here is a configuration error.
inline ExperimentConfig parse_config(const Json& j) {
  using detail::read;
  using detail::read_double;
  using detail::read_size;
  detail::reject_unknown(j,
                         {"benchmark", "architecture", "optimizer", "continual", "measures", "measure_settings",
                          "seeds", "output_dir", "grid", "noise", "correlate"},
                         "config");
  ExperimentConfig c;
  auto& b = c.benchmark;
  auto& r = c.run;

  if (j.contains("benchmark")) {
    const auto& jb = j.at("benchmark");
    detail::reject_unknown(jb,
                           {"kind", "scenario", "n_tasks", "classes_per_task", "data_dir", "train_subset",
                            "test_subset", "task_seed", "synthetic"},
                           "benchmark");
    std::string kind = "synthetic", scenario = "permuted";
    read(jb, "kind", kind, "benchmark");
    read(jb, "scenario", scenario, "benchmark");
    if (kind == "synthetic") b.kind = BenchmarkKind::synthetic;
    else if (kind == "mnist") b.kind = BenchmarkKind::mnist;
    else throw ConfigError("benchmark.kind must be 'synthetic' or 'mnist'");
    if (scenario == "permuted") b.scenario = Scenario::permuted;
    else if (scenario == "split") b.scenario = Scenario::split;
    else throw ConfigError("benchmark.scenario must be 'permuted' or 'split'");
    read_size(jb, "n_tasks", b.n_tasks, "benchmark");
    read_size(jb, "classes_per_task", b.classes_per_task, "benchmark");
    read(jb, "data_dir", b.data_dir, "benchmark");
    read_size(jb, "train_subset", b.train_subset, "benchmark");
    read_size(jb, "test_subset", b.test_subset, "benchmark");
    read(jb, "task_seed", b.task_seed, "benchmark");
    if (jb.contains("synthetic")) {
      const auto& js = jb.at("synthetic");
      detail::reject_unknown(
          js, {"seed", "dim", "n_classes", "n_per_class", "n_test_per_class", "cluster_spread", "active_fraction"},
          "benchmark.synthetic");
      read(js, "seed", b.synthetic.seed, "benchmark.synthetic");
      read_size(js, "dim", b.synthetic.dim, "benchmark.synthetic");
      read_size(js, "n_classes", b.synthetic.n_classes, "benchmark.synthetic");
      read_size(js, "n_per_class", b.synthetic.n_per_class, "benchmark.synthetic");
      read_size(js, "n_test_per_class", b.synthetic.n_test_per_class, "benchmark.synthetic");
      read_double(js, "cluster_spread", b.synthetic.cluster_spread, "benchmark.synthetic");
      read_double(js, "active_fraction", b.synthetic.active_fraction, "benchmark.synthetic");
    }
  }
  if (j.contains("architecture")) {
    const auto& ja = j.at("architecture");
    detail::reject_unknown(ja, {"hidden", "multi_head"}, "architecture");
    read(ja, "hidden", r.hidden, "architecture");
    read(ja, "multi_head", r.multi_head, "architecture");
  }
  if (j.contains("optimizer")) {
    const auto& jo = j.at("optimizer");
    detail::reject_unknown(jo, {"kind", "lr", "beta1", "beta2", "eps", "bias_correction", "momentum"}, "optimizer");
    std::string kind = "adam";
    read(jo, "kind", kind, "optimizer");
    if (kind == "adam") r.optimizer.kind = OptimizerKind::adam;
    else if (kind == "sgd") r.optimizer.kind = OptimizerKind::sgd;
    else throw ConfigError("optimizer.kind must be 'adam' or 'sgd'");
    if (jo.contains("lr")) {
      read_double(jo, "lr", r.optimizer.adam.lr, "optimizer");
      r.optimizer.sgd.lr = r.optimizer.adam.lr;
    } else if (r.optimizer.kind == OptimizerKind::sgd) {
      r.optimizer.adam.lr = r.optimizer.sgd.lr;
    }
    read_double(jo, "beta1", r.optimizer.adam.beta1, "optimizer");
    read_double(jo, "beta2", r.optimizer.adam.beta2, "optimizer");
    read_double(jo, "eps", r.optimizer.adam.eps, "optimizer");
    read(jo, "bias_correction", r.optimizer.adam.bias_correction, "optimizer");
    read_double(jo, "momentum", r.optimizer.sgd.momentum, "optimizer");
  }
  if (j.contains("continual")) {
    const auto& jc = j.at("continual");
    detail::reject_unknown(jc, {"method", "c", "xi", "reinit", "epochs", "batch_size", "steps"}, "continual");
    std::string method(to_string(r.method));
    read(jc, "method", method, "continual");
    r.method = parse_measure(method);
    read_double(jc, "c", r.c, "continual");
    read_double(jc, "xi", r.measures.xi, "continual");
    read(jc, "reinit", r.reinit, "continual");
    read_size(jc, "epochs", r.train.epochs, "continual");
    read_size(jc, "batch_size", r.train.batch_size, "continual");
    read_size(jc, "steps", r.train.steps, "continual");
  }
  if (j.contains("measures")) {
    std::vector<std::string> names;
    read(j, "measures", names, "config");
    r.tracked.clear();
    for (const auto& n : names) r.tracked.push_back(parse_measure(n));
  }
  if (j.contains("measure_settings")) {
    const auto& jm = j.at("measure_settings");
    detail::reject_unknown(jm,
                           {"posthoc_samples", "label_draws", "batch_ef_batch", "batch_ef_batches", "ema_decay",
                            "sos_alpha"},
                           "measure_settings");
    auto& ms = r.measures;
    read_size(jm, "posthoc_samples", ms.posthoc_samples, "measure_settings");
    read_size(jm, "label_draws", ms.label_draws, "measure_settings");
    read_size(jm, "batch_ef_batch", ms.batch_ef_batch, "measure_settings");
    read_size(jm, "batch_ef_batches", ms.batch_ef_batches, "measure_settings");
    read_double(jm, "ema_decay", ms.ema_decay, "measure_settings");
    if (jm.contains("sos_alpha")) {
      const auto& a = jm.at("sos_alpha");
      if (a.is_string() && a.get<std::string>() == "formula") {
        ms.sos_alpha_mode = SosAlphaMode::formula;
      } else if (a.is_number()) {
        ms.sos_alpha_mode = SosAlphaMode::fixed;
        ms.sos_alpha = a.get<double>();
      } else {
        throw ConfigError("measure_settings.sos_alpha must be \"formula\" or a number");
      }
    }
  }
  if (j.contains("seeds")) read(j, "seeds", c.seeds, "config");
  read(j, "output_dir", c.output_dir, "config");
  if (j.contains("grid")) {
    const auto& jg = j.at("grid");
    detail::reject_unknown(jg, {"a", "i_min", "i_max", "reinit", "validation"}, "grid");
    read(jg, "a", c.grid.a, "grid");
    read(jg, "i_min", c.grid.i_min, "grid");
    read(jg, "i_max", c.grid.i_max, "grid");
    read(jg, "reinit", c.grid.reinit, "grid");
    read(jg, "validation", c.grid.validation, "grid");
  }
  if (j.contains("noise")) {
    const auto& jn = j.at("noise");
    detail::reject_unknown(jn, {"batch_size", "steps", "record_every", "thresholds"}, "noise");
    read_size(jn, "batch_size", c.noise.batch_size, "noise");
    read_size(jn, "steps", c.noise.steps, "noise");
    read_size(jn, "record_every", c.noise.record_every, "noise");
    read(jn, "thresholds", c.noise.thresholds, "noise");
  }
  if (j.contains("correlate")) {
    const auto& jr = j.at("correlate");
    detail::reject_unknown(jr, {"pairs", "subsample", "exclude_zeros"}, "correlate");
    std::vector<std::vector<std::string>> pairs;
    read(jr, "pairs", pairs, "correlate");
    for (const auto& p : pairs) {
      if (p.size() != 2) throw ConfigError("correlate.pairs entries must have two measure names");
      c.correlate.pairs.emplace_back(p[0], p[1]);
    }
    read_size(jr, "subsample", c.correlate.subsample, "correlate");
    read(jr, "exclude_zeros", c.correlate.exclude_zeros, "correlate");
  }
  c.noise.optimizer = r.optimizer;
  validate(c);
  c.resolved = to_json(c);
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Re-validates and refreshes the canonical echo after programmatic overrides.
inline void finalize(ExperimentConfig& c) {
  c.noise.optimizer = c.run.optimizer;
  validate(c);
  c.resolved = to_json(c);
}

/// 64-bit FNV-1a over the canonical JSON text, as 16 hex digits. The output
/// location does not take part.
inline std::string config_hash(const Json& canonical) {
  Json keyed = canonical;
  if (keyed.is_object()) keyed.erase("output_dir");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : keyed.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[std::size_t(i)] = digits[h & 0xf];
  return out;
}

// ---------------------------------------------------------------------------
// Task construction

inline std::filesystem::path resolve_data_dir(const BenchmarkConfig& b) {
  if (!b.data_dir.empty()) return b.data_dir;
  if (const char* env = std::getenv("CLREG_DATA_DIR"); env != nullptr && *env != '\0') return env;
  throw ConfigError("mnist benchmark needs benchmark.data_dir or CLREG_DATA_DIR");
}

namespace detail {

inline LabeledSet head_rows(const LabeledSet& s, std::size_t n) {
  if (n == 0 || n >= s.size()) return s;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return subset(s, idx);
}

}  // namespace detail

inline Dataset load_base_dataset(const BenchmarkConfig& b) {
  Dataset base = b.kind == BenchmarkKind::synthetic ? make_synthetic(b.synthetic) : load_mnist(resolve_data_dir(b));
  base.train = detail::head_rows(base.train, b.train_subset);
  base.test = detail::head_rows(base.test, b.test_subset);
  return base;
}

/// Builds the task sequence. Permuted: task 0 keeps the original feature
/// order, task k > 0 uses a permutation seeded from task_seed and k.
/// Split: consecutive class blocks, one head per task.
inline std::vector<Task> make_tasks(const BenchmarkConfig& b, const Dataset& base, bool multi_head) {
  std::vector<Task> tasks;
  if (b.scenario == Scenario::permuted) {
    for (std::size_t k = 0; k < b.n_tasks; ++k) {
      const std::uint64_t seed = k == 0 ? 0 : derive_seed(b.task_seed, k) | 1u;
      tasks.push_back({make_permuted_task(base, seed), multi_head ? k : 0});
    }
  } else {
    auto split = make_split_tasks(base, b.classes_per_task);
    if (b.n_tasks > split.size()) {
      throw ConfigError("benchmark.n_tasks exceeds the number of class blocks (" + std::to_string(split.size()) + ")");
    }
    for (std::size_t k = 0; k < b.n_tasks; ++k) tasks.push_back({std::move(split[k]), k});
  }
  return tasks;
}

inline std::vector<Task> with_validation(std::span<const Task> tasks) {
  std::vector<Task> out;
  for (const auto& t : tasks) out.push_back({validation_split(t.data), t.head});
  return out;
}

}  // namespace clreg
