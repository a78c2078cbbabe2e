#pragma once

// Run artifacts: report JSON, importance vector files, staged output
// directories.
//
// Importance binary layout (little-endian):
//   8 bytes  magic "CLRGIV01"
//   u32      id length, then the id bytes
//   u64      sample_count
//   u64      n
//   n x f64  values

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clreg/analysis.hpp"
#include "clreg/config.hpp"
#include "clreg/continual.hpp"
#include "clreg/error.hpp"
#include "clreg/importance.hpp"

namespace clreg {

inline constexpr std::array<char, 8> kImportanceMagic{'C', 'L', 'R', 'G', 'I', 'V', '0', '1'};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> b{};
  std::memcpy(b.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  out.write(reinterpret_cast<const char*>(b.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& path) {
  std::array<unsigned char, sizeof(T)> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), sizeof(T))) throw IoError(path + ": truncated importance file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

}  // namespace detail

inline void write_importance(const ImportanceVector& iv, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kImportanceMagic.data(), kImportanceMagic.size());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(iv.measure_id.size()));
  out.write(iv.measure_id.data(), std::streamsize(iv.measure_id.size()));
  detail::put_le<std::uint64_t>(out, iv.sample_count);
  detail::put_le<std::uint64_t>(out, iv.values.size());
  for (double v : iv.values) detail::put_le<double>(out, v);
  if (!out) throw IoError("write failed for " + path.string());
}

inline ImportanceVector read_importance(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kImportanceMagic) {
    throw IoError(path.string() + ": not an importance vector file");
  }
  ImportanceVector iv;
  const auto id_len = detail::get_le<std::uint32_t>(in, path.string());
  iv.measure_id.resize(id_len);
  if (!in.read(iv.measure_id.data(), id_len)) throw IoError(path.string() + ": truncated importance file");
  iv.sample_count = detail::get_le<std::uint64_t>(in, path.string());
  const auto n = detail::get_le<std::uint64_t>(in, path.string());
  iv.values.resize(n);
  for (auto& v : iv.values) v = detail::get_le<double>(in, path.string());
  return iv;
}

/// "index,<id>" header then one row per parameter.
inline void write_importance_csv(const ImportanceVector& iv, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "index," << iv.measure_id << '\n';
  for (std::size_t i = 0; i < iv.size(); ++i) out << i << ',' << detail::format_double(iv.values[i]) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Report JSON

/// Report payload; wall-clock numbers live under "timings" only so that the
/// rest is a pure function of (config, seed).
inline Json report_json(const RunReport& r, const std::string& hash) {
  Json j;
  j["seed"] = r.seed;
  j["config_hash"] = hash;
  j["accuracies"] = r.accuracies;
  j["mean_accuracy"] = r.mean_accuracy;
  Json tasks = Json::array();
  Json timings;
  timings["total_seconds"] = r.seconds;
  Json task_times = Json::array();
  for (const auto& t : r.tasks) {
    Json jt;
    jt["name"] = t.name;
    jt["accuracies_after"] = t.accuracies_after;
    jt["steps"] = t.log.steps;
    jt["clamped"] = t.log.clamped;
    jt["loss_start"] = t.log.loss_start;
    jt["loss_end"] = t.log.loss_end;
    jt["loss_decrease"] = t.log.loss_start - t.log.loss_end;
    Json summed;
    for (const auto& [id, iv] : t.result.importances) summed[id] = iv.summed();
    jt["summed_importance"] = summed;
    Json summed_raw;
    for (const auto& row : t.result.summed.rows) summed_raw[row.measure] = row.summed;
    jt["summed_omega_tilde"] = summed_raw;
    if (t.log.noise_term > 0.0 || t.log.momentum_term > 0.0) {
      jt["assumption_check"] = {{"noise_term", t.log.noise_term}, {"momentum_term", t.log.momentum_term}};
    }
    tasks.push_back(jt);
    Json tt;
    tt["train_seconds"] = t.log.train_seconds;
    tt["measure_seconds"] = t.result.measure_seconds;
    task_times.push_back(tt);
  }
  j["tasks"] = tasks;
  timings["tasks"] = task_times;
  j["timings"] = timings;
  return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Staged output directories

/// A scratch directory next to `target` that replaces it on commit; removed
/// on destruction if never committed.
class StagedDir {
 public:
  explicit StagedDir(std::filesystem::path target) : target_(std::move(target)) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(target_.parent_path().empty() ? fs::path(".") : target_.parent_path(), ec);
    if (ec) throw IoError("cannot create " + target_.parent_path().string() + ": " + ec.message());
    staging_ = target_;
    staging_ += ".staging";
    fs::remove_all(staging_, ec);
    fs::create_directories(staging_, ec);
    if (ec) throw IoError("cannot create " + staging_.string() + ": " + ec.message());
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      std::filesystem::remove_all(staging_, ec);
    }
  }

  const std::filesystem::path& path() const { return staging_; }
  const std::filesystem::path& target() const { return target_; }

  void commit() {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::remove_all(target_, ec);
    fs::rename(staging_, target_, ec);
    if (ec) throw IoError("cannot move results into " + target_.string() + ": " + ec.message());
    committed_ = true;
  }

 private:
  std::filesystem::path target_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

inline std::string importance_file_stem(std::size_t task, const std::string& id) {
  return "task-" + std::to_string(task) + "-" + id;
}

/// Writes config echo, report, per-task importances (binary + CSV) and the
/// step-loss log into `dir`.
inline void write_run_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg, const RunReport& r) {
  namespace fs = std::filesystem;
  const auto hash = config_hash(cfg.resolved);
  write_text(dir / "config.json", cfg.resolved.dump(2) + "\n");
  write_text(dir / "report.json", report_json(r, hash).dump(2) + "\n");
  fs::create_directories(dir / "importance");
  for (std::size_t k = 0; k < r.tasks.size(); ++k) {
    for (const auto& [id, iv] : r.tasks[k].result.importances) {
      const auto stem = importance_file_stem(k, id);
      write_importance(iv, dir / "importance" / (stem + ".bin"));
      write_importance_csv(iv, dir / "importance" / (stem + ".csv"));
    }
  }
  std::ofstream log(dir / "log.csv", std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write " + (dir / "log.csv").string());
  log << "task,step,loss\n";
  for (std::size_t k = 0; k < r.tasks.size(); ++k) {
    const auto& losses = r.tasks[k].log.step_losses;
    for (std::size_t s = 0; s < losses.size(); ++s) log << k << ',' << s << ',' << detail::format_double(losses[s]) << '\n';
  }
  if (!log) throw IoError("write failed for " + (dir / "log.csv").string());
}

// ---------------------------------------------------------------------------
// Correlations over a finished run

/// Pearson r per task for each measure pair found in `run_dir/importance`;
/// scatter CSVs go to `scatter_dir` when it is non-empty.
inline CorrelationReport correlate_run(const std::filesystem::path& run_dir,
                                       const std::vector<std::pair<std::string, std::string>>& pairs,
                                       std::size_t subsample, bool exclude_zeros, std::uint64_t seed,
                                       const std::filesystem::path& scatter_dir = {}) {
  namespace fs = std::filesystem;
  const auto imp = run_dir / "importance";
  if (!fs::is_directory(imp)) throw IoError(run_dir.string() + " has no importance directory");
  std::size_t n_tasks = 0;
  for (const auto& entry : fs::directory_iterator(imp)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("task-", 0) != 0) continue;
    n_tasks = std::max<std::size_t>(n_tasks, std::stoull(name.substr(5)) + 1);
  }
  CorrelationReport rep;
  rep.seed = seed;
  for (std::size_t k = 0; k < n_tasks; ++k) {
    for (const auto& [a, b] : pairs) {
      const auto pa = imp / (importance_file_stem(k, a) + ".bin");
      const auto pb = imp / (importance_file_stem(k, b) + ".bin");
      if (!fs::exists(pa) || !fs::exists(pb)) continue;
      const auto ia = read_importance(pa);
      const auto ib = read_importance(pb);
      CorrelationEntry e;
      e.task = k;
      e.measure_a = a;
      e.measure_b = b;
      e.n = ia.size();
      e.r = exclude_zeros ? pearson_excluding_zeros(ia.values, ib.values) : pearson(ia, ib);
      rep.entries.push_back(e);
      if (!scatter_dir.empty()) {
        export_scatter(ia, ib, subsample, seed,
                       scatter_dir / ("scatter-task-" + std::to_string(k) + "-" + a + "-" + b + ".csv"));
      }
    }
  }
  return rep;
}

inline Json to_json(const CorrelationReport& rep) {
  Json j;
  j["seed"] = rep.seed;
  Json entries = Json::array();
  for (const auto& e : rep.entries) {
    entries.push_back({{"task", e.task},
                       {"measure_a", e.measure_a},
                       {"measure_b", e.measure_b},
                       {"n", e.n},
                       {"r", e.r ? Json(*e.r) : Json(nullptr)},
                       {"degenerate", !e.r.has_value()}});
  }
  j["entries"] = entries;
  return j;
}

inline void write_noise_csv(const NoiseProfile& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,noise_sq,grad_sq,ratio\n";
  for (const auto& s : p.samples) {
    out << s.step << ',' << detail::format_double(s.noise_sq) << ',' << detail::format_double(s.grad_sq) << ','
        << detail::format_double(s.ratio) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline void write_exceedance_csv(const NoiseProfile& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "threshold,fraction\n";
  for (std::size_t i = 0; i < p.thresholds.size(); ++i) {
    out << detail::format_double(p.thresholds[i]) << ',' << detail::format_double(p.exceedance[i]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace clreg
