// Command-line experiment runner.
//
//   clreg train     --config cfg.json [--seed N] [--out DIR] [overrides]
//   clreg grid      --config cfg.json [--jobs N]
//   clreg correlate --run DIR [--pairs a:b,c:d]
//   clreg noise     --config cfg.json
//   clreg measure   --config cfg.json --measures fisher,mas
//
// Precedence: built-in defaults < config file < command-line flags.
// Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "clreg/clreg.hpp"

namespace {

using namespace clreg;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIo = 4;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t jobs = 1;
  std::string measures;
  std::optional<std::size_t> batch_size;
  std::string c;
  std::string xi;
  std::string reinit;
  std::string method;
};

double parse_number(const std::string& flag, const std::string& text) {
  try {
    return clreg::detail::parse_double(text);
  } catch (const IoError&) {
    throw ConfigError(flag + ": '" + text + "' is not a number");
  }
}

bool parse_bool(const std::string& flag, const std::string& text) {
  if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "off" || text == "no") return false;
  throw ConfigError(flag + ": '" + text + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ExperimentConfig resolve(const Overrides& o) {
  ExperimentConfig cfg = o.config_path.empty() ? parse_config(Json::object()) : load_config(o.config_path);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (!o.measures.empty()) {
    cfg.run.tracked.clear();
    for (const auto& m : split_list(o.measures)) cfg.run.tracked.push_back(parse_measure(m));
  }
  if (o.batch_size) cfg.run.train.batch_size = *o.batch_size;
  if (!o.c.empty()) cfg.run.c = parse_number("--c", o.c);
  if (!o.xi.empty()) cfg.run.measures.xi = parse_number("--xi", o.xi);
  if (!o.reinit.empty()) cfg.run.reinit = parse_bool("--reinit", o.reinit);
  if (!o.method.empty()) cfg.run.method = parse_measure(o.method);
  finalize(cfg);
  return cfg;
}

std::vector<Task> build_tasks(const ExperimentConfig& cfg) {
  const Dataset base = load_base_dataset(cfg.benchmark);
  return make_tasks(cfg.benchmark, base, cfg.run.multi_head);
}

int cmd_train(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto tasks = build_tasks(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    ContinualConfig run = cfg.run;
    run.seed = seed;
    StagedDir dir(fs::path(cfg.output_dir) / ("run-" + std::to_string(seed)));
    const auto report = run_continual(tasks, run);
    write_run_artifacts(dir.path(), cfg, report);
    dir.commit();
    std::cout << "seed " << seed << ": mean accuracy " << report.mean_accuracy << " -> " << dir.target().string()
              << "\n";
  }
  return 0;
}

int cmd_grid(const Overrides& o) {
  const auto cfg = resolve(o);
  auto tasks = build_tasks(cfg);
  if (cfg.grid.validation) tasks = with_validation(tasks);
  const auto cs = c_grid(cfg.grid.a, cfg.grid.i_min, cfg.grid.i_max);
  const std::vector<bool> reinit_vec = cfg.grid.reinit;
  std::unique_ptr<bool[]> reinit(new bool[reinit_vec.size()]);
  for (std::size_t i = 0; i < reinit_vec.size(); ++i) reinit[i] = reinit_vec[i];
  StagedDir dir(fs::path(cfg.output_dir) / "grid");
  const auto g = grid_search(tasks, cfg.run, cs, std::span<const bool>(reinit.get(), reinit_vec.size()), cfg.seeds,
                             std::max<std::size_t>(1, o.jobs));
  Json cells = Json::array();
  std::ostringstream csv;
  csv << "c,reinit,score\n";
  for (const auto& cell : g.cells) {
    cells.push_back({{"c", cell.c}, {"reinit", cell.reinit}, {"mean_accuracies", cell.mean_accuracies}, {"score", cell.score}});
    csv << clreg::detail::format_double(cell.c) << ',' << (cell.reinit ? "on" : "off") << ','
        << clreg::detail::format_double(cell.score) << '\n';
  }
  const auto& best = g.cells[g.best];
  Json out = {{"method", to_string(cfg.run.method)},
              {"config_hash", config_hash(cfg.resolved)},
              {"cells", cells},
              {"best", {{"c", best.c}, {"reinit", best.reinit}, {"score", best.score}}}};
  write_text(dir.path() / "config.json", cfg.resolved.dump(2) + "\n");
  write_text(dir.path() / "grid.json", out.dump(2) + "\n");
  write_text(dir.path() / "grid.csv", csv.str());
  dir.commit();
  std::cout << "best c " << best.c << " reinit " << (best.reinit ? "on" : "off") << " score " << best.score << "\n";
  return 0;
}

int cmd_correlate(const Overrides& o, const std::string& run_dir, const std::string& pairs_text) {
  const auto cfg = resolve(o);
  std::vector<std::pair<std::string, std::string>> pairs = cfg.correlate.pairs;
  if (!pairs_text.empty()) {
    pairs.clear();
    for (const auto& p : split_list(pairs_text)) {
      const auto parts = split_list(p, ':');
      if (parts.size() != 2) throw ConfigError("--pairs entries look like a:b");
      (void)parse_measure(parts[0]);
      (void)parse_measure(parts[1]);
      pairs.emplace_back(parts[0], parts[1]);
    }
  }
  if (pairs.empty()) throw ConfigError("no measure pairs given (--pairs or correlate.pairs)");
  if (!fs::is_directory(run_dir)) throw IoError("run directory " + run_dir + " does not exist");
  const fs::path target = o.out.empty() ? fs::path(run_dir) / "correlations" : fs::path(o.out);
  StagedDir dir(target);
  const auto rep = correlate_run(run_dir, pairs, cfg.correlate.subsample, cfg.correlate.exclude_zeros,
                                 cfg.seeds.front(), dir.path());
  write_text(dir.path() / "correlations.json", to_json(rep).dump(2) + "\n");
  dir.commit();
  for (const auto& e : rep.entries) {
    std::cout << "task " << e.task << " " << e.measure_a << " vs " << e.measure_b << ": "
              << (e.r ? std::to_string(*e.r) : std::string("degenerate")) << "\n";
  }
  return 0;
}

int cmd_noise(const Overrides& o) {
  const auto cfg = resolve(o);
  const auto tasks = build_tasks(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    ContinualConfig run = cfg.run;
    DenseNet net = make_network(run, tasks.front().data.feature_dim(), tasks.front().data.n_classes, tasks.size());
    glorot_uniform_init(net, derive_seed(seed, kStreamInit));
    NoiseSettings ns = cfg.noise;
    ns.seed = seed;
    StagedDir dir(fs::path(cfg.output_dir) / ("noise-" + std::to_string(seed)));
    const auto prof = noise_profile(net, tasks.front().data.train, tasks.front().head, ns);
    write_noise_csv(prof, dir.path() / "noise.csv");
    write_exceedance_csv(prof, dir.path() / "exceedance.csv");
    write_text(dir.path() / "config.json", cfg.resolved.dump(2) + "\n");
    dir.commit();
    std::cout << "seed " << seed << ": median noise/gradient ratio " << prof.median_ratio() << "\n";
  }
  return 0;
}

int cmd_measure(const Overrides& o) {
  auto cfg = resolve(o);
  if (cfg.run.tracked.empty() && cfg.run.method == Measure::none) throw ConfigError("no measures requested");
  const auto tasks = build_tasks(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    ContinualConfig run = cfg.run;
    run.seed = seed;
    run.c = 0.0;
    StagedDir dir(fs::path(cfg.output_dir) / ("measure-" + std::to_string(seed)));
    const auto report = run_continual(std::span<const Task>(tasks).first(1), run);
    write_run_artifacts(dir.path(), cfg, report);
    const auto& summed = report.tasks.front().result.summed;
    std::ostringstream csv;
    csv << "measure,summed_omega_tilde\n";
    for (const auto& row : summed.rows) csv << row.measure << ',' << clreg::detail::format_double(row.summed) << '\n';
    csv << "loss_decrease," << clreg::detail::format_double(summed.loss_decrease()) << '\n';
    write_text(dir.path() / "summed_importance.csv", csv.str());
    dir.commit();
    std::cout << "seed " << seed << ": measures written to " << dir.target().string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Importance-weighted continual learning experiments"};
  app.require_subcommand(1);
  Overrides o;
  std::string run_dir, pairs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "JSON config file");
    sub->add_option("--seed", o.seed, "Single seed (replaces the config's seed list)");
    sub->add_option("--out", o.out, "Output directory");
  };
  auto add_run = [&](CLI::App* sub) {
    sub->add_option("--measures", o.measures, "Comma-separated measures to compute");
    sub->add_option("--batch-size", o.batch_size, "Minibatch size");
    sub->add_option("--c", o.c, "Penalty strength");
    sub->add_option("--xi", o.xi, "Rescaling damping");
    sub->add_option("--reinit", o.reinit, "Re-initialize weights between tasks (true/false)");
    sub->add_option("--method", o.method, "Measure driving the penalty");
  };

  auto* train = app.add_subcommand("train", "Run the continual schedule");
  add_common(train);
  add_run(train);
  auto* grid = app.add_subcommand("grid", "Grid search over c and re-initialization");
  add_common(grid);
  add_run(grid);
  grid->add_option("--jobs", o.jobs, "Concurrent runs");
  auto* corr = app.add_subcommand("correlate", "Correlate stored importance vectors");
  add_common(corr);
  corr->add_option("--run", run_dir, "Run directory (out/run-<seed>)")->required();
  corr->add_option("--pairs", pairs, "Measure pairs, e.g. mas:masx,si:sos");
  auto* noise = app.add_subcommand("noise", "Gradient-noise profile on the first task");
  add_common(noise);
  add_run(noise);
  auto* measure = app.add_subcommand("measure", "Train the first task and store importance measures");
  add_common(measure);
  add_run(measure);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return cmd_train(o);
    if (*grid) return cmd_grid(o);
    if (*corr) return cmd_correlate(o, run_dir, pairs);
    if (*noise) return cmd_noise(o);
    if (*measure) return cmd_measure(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
