#pragma once

// Continual-learning trainer: quadratic importance-weighted penalty, per-task
// consolidation, task loop, evaluation and hyperparameter grids.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "clreg/data.hpp"
#include "clreg/error.hpp"
#include "clreg/importance.hpp"
#include "clreg/nn.hpp"
#include "clreg/online.hpp"
#include "clreg/optim.hpp"
#include "clreg/posthoc.hpp"
#include "clreg/rng.hpp"

namespace clreg {

// ---------------------------------------------------------------------------
// Measures

enum class Measure {
  none,
  si,
  siu,
  sib,
  onaf,
  path_integral_full,
  si_ema,
  si_last_half,
  sos,
  sos_unbiased,
  fisher,
  fisher_exact,
  empirical_fisher,
  predicted_fisher,
  sqrt_fisher,
  af,
  batch_ef,
  mas,
  mas_logits,
  masx,
};

inline constexpr Measure kAllMeasures[] = {
    Measure::none,         Measure::si,           Measure::siu,
    Measure::sib,          Measure::onaf,         Measure::path_integral_full,
    Measure::si_ema,       Measure::si_last_half, Measure::sos,
    Measure::sos_unbiased, Measure::fisher,       Measure::fisher_exact,
    Measure::empirical_fisher, Measure::predicted_fisher, Measure::sqrt_fisher,
    Measure::af,           Measure::batch_ef,     Measure::mas,
    Measure::mas_logits,   Measure::masx,
};

inline std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::none: return "none";
    case Measure::si: return "si";
    case Measure::siu: return "siu";
    case Measure::sib: return "sib";
    case Measure::onaf: return "onaf";
    case Measure::path_integral_full: return "path_integral_full";
    case Measure::si_ema: return "si_ema";
    case Measure::si_last_half: return "si_last_half";
    case Measure::sos: return "sos";
    case Measure::sos_unbiased: return "sos_unbiased";
    case Measure::fisher: return "fisher";
    case Measure::fisher_exact: return "fisher_exact";
    case Measure::empirical_fisher: return "empirical_fisher";
    case Measure::predicted_fisher: return "predicted_fisher";
    case Measure::sqrt_fisher: return "sqrt_fisher";
    case Measure::af: return "af";
    case Measure::batch_ef: return "batch_ef";
    case Measure::mas: return "mas";
    case Measure::mas_logits: return "mas_logits";
    case Measure::masx: return "masx";
  }
  return "?";
}

inline Measure parse_measure(std::string_view s) {
  for (Measure m : kAllMeasures) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown measure '" + std::string(s) + "'");
}

inline std::optional<OnlineKind> online_kind(Measure m) {
  switch (m) {
    case Measure::si: return OnlineKind::si;
    case Measure::siu: return OnlineKind::siu;
    case Measure::sib: return OnlineKind::sib;
    case Measure::onaf: return OnlineKind::onaf;
    case Measure::path_integral_full: return OnlineKind::path_integral_full;
    case Measure::si_ema: return OnlineKind::si_ema;
    case Measure::si_last_half: return OnlineKind::si_last_half;
    default: return std::nullopt;
  }
}

inline bool is_sos(Measure m) { return m == Measure::sos || m == Measure::sos_unbiased; }

enum class SosAlphaMode { formula, fixed };

struct MeasureSettings {
  double xi = 0.1;
  double ema_decay = 0.999;
  SosAlphaMode sos_alpha_mode = SosAlphaMode::formula;  // for sos_unbiased
  double sos_alpha = 1.0;                               // used when mode == fixed
  std::size_t posthoc_samples = 1000;                   // clipped to the training set size
  std::size_t label_draws = 1;
  std::size_t batch_ef_batch = 256;
  std::size_t batch_ef_batches = 0;  // 0: enough batches to cover posthoc_samples
};

struct TrainSettings {
  std::size_t epochs = 20;
  std::size_t batch_size = 256;
  std::size_t steps = 0;  // > 0 overrides epochs with a fixed step budget
};

// ---------------------------------------------------------------------------
// Quadratic penalty

/// c * sum_i omega_i (theta_i - anchor_i)^2 around the latest anchor.
struct RegularizerState {
  FlatVector anchor;     // empty until the first consolidation
  FlatVector omega_acc;  // accumulated importance, elementwise >= 0
  double c = 0.0;

  RegularizerState() = default;
  explicit RegularizerState(double strength) : c(strength) {
    if (!(strength >= 0.0)) throw ConfigError("penalty strength c must be nonnegative");
  }

  bool active() const { return c > 0.0 && !anchor.empty(); }
};

struct PenaltyGrad {
  double penalty = 0.0;
  FlatVector grad;
};

/// Adds the penalty gradient 2 c omega (theta - anchor) to `grad` and returns the penalty.
inline double add_penalty_grad(std::span<const double> params, const RegularizerState& reg, std::span<double> grad) {
  if (!(reg.c >= 0.0)) throw ConfigError("penalty strength c must be nonnegative");
  if (!reg.active()) return 0.0;
  detail::require_same_length(params.size(), reg.anchor.size(), "penalty anchor");
  detail::require_same_length(params.size(), reg.omega_acc.size(), "penalty importance");
  detail::require_same_length(params.size(), grad.size(), "penalty gradient");
  double penalty = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double d = params[i] - reg.anchor[i];
    penalty += reg.omega_acc[i] * d * d;
    grad[i] += 2.0 * reg.c * reg.omega_acc[i] * d;
  }
  return reg.c * penalty;
}

inline PenaltyGrad penalty_and_grad(std::span<const double> params, const RegularizerState& reg) {
  PenaltyGrad out;
  out.grad.assign(params.size(), 0.0);
  out.penalty = add_penalty_grad(params, reg, out.grad);
  return out;
}

/// omega_acc += omega_task, anchor <- theta_end.
inline void consolidate(RegularizerState& reg, const ImportanceVector& omega_task, std::span<const double> theta_end) {
  detail::require_same_length(omega_task.size(), theta_end.size(), "consolidate");
  for (double w : omega_task.values) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("consolidated importance must be finite and nonnegative (" + omega_task.measure_id + ")");
    }
  }
  if (reg.omega_acc.empty()) reg.omega_acc.assign(omega_task.size(), 0.0);
  detail::require_same_length(reg.omega_acc.size(), omega_task.size(), "consolidate accumulator");
  for (std::size_t i = 0; i < omega_task.size(); ++i) reg.omega_acc[i] += omega_task.values[i];
  reg.anchor.assign(theta_end.begin(), theta_end.end());
}

// ---------------------------------------------------------------------------
// Training one task

struct Task {
  Dataset data;
  std::size_t head = 0;
};

struct TrainingLog {
  std::vector<double> step_losses;  // minibatch task loss before each step
  double loss_start = 0.0;          // training-set task loss at theta(0)
  double loss_end = 0.0;            // training-set task loss at theta(T)
  std::size_t steps = 0;
  std::size_t clamped = 0;
  double train_seconds = 0.0;
  // Assumption check, populated when the full gradient is tracked with Adam:
  // per-step means over parameters of (1-b1) sigma^2 and |b1 m_{t-1} g|.
  double noise_term = 0.0;
  double momentum_term = 0.0;
};

struct TrainingDiverged : DivergenceError {
  TrainingDiverged(const std::string& what, TrainingLog partial) : DivergenceError(what), log(std::move(partial)) {}
  TrainingLog log;
};

struct TaskResult {
  std::map<std::string, ImportanceVector> importances;  // final (rescaled where applicable)
  std::map<std::string, FlatVector> omega_tilde;        // online measures before rescaling
  std::map<std::string, double> measure_seconds;
  SummedImportanceReport summed;
  TrainingLog log;
};

namespace detail {

inline double resolve_sos_alpha(const MeasureSettings& ms, std::size_t batch_size) {
  return ms.sos_alpha_mode == SosAlphaMode::formula ? sos_alpha(batch_size) : ms.sos_alpha;
}

/// Seed streams used inside one task.
enum : std::uint64_t { kStreamBatches = 1, kStreamIndep = 2, kStreamPosthoc = 3 };

}  // namespace detail

inline ImportanceVector compute_posthoc(Measure m, const DenseNet& net, const LabeledSet& data, std::size_t head,
                                        std::span<const std::size_t> indices, const MeasureSettings& ms,
                                        std::uint64_t seed) {
  switch (m) {
    case Measure::fisher:
      return fisher_diag(net, data, head, FisherMode::sampled_label, indices, seed, ms.label_draws);
    case Measure::fisher_exact:
      return fisher_diag(net, data, head, FisherMode::exact_expectation, indices, seed);
    case Measure::empirical_fisher:
      return fisher_diag(net, data, head, FisherMode::empirical, indices, seed);
    case Measure::predicted_fisher:
      return fisher_diag(net, data, head, FisherMode::predicted, indices, seed);
    case Measure::sqrt_fisher: {
      auto f = transform(fisher_diag(net, data, head, FisherMode::sampled_label, indices, seed, ms.label_draws),
                         Transform::sqrt);
      f.measure_id = "sqrt_fisher";
      return f;
    }
    case Measure::af:
      return absolute_fisher(net, data, head, FisherMode::sampled_label, indices, seed, ms.label_draws);
    case Measure::batch_ef: {
      const std::size_t b = std::max<std::size_t>(1, ms.batch_ef_batch);
      const std::size_t nb = ms.batch_ef_batches > 0 ? ms.batch_ef_batches
                                                     : std::max<std::size_t>(1, (indices.size() + b - 1) / b);
      return batch_ef(net, data, head, b, nb, seed);
    }
    case Measure::mas:
      return mas(net, data, head, indices, MasOutput::probabilities);
    case Measure::mas_logits:
      return mas(net, data, head, indices, MasOutput::logits);
    case Measure::masx:
      return masx(net, data, head, indices);
    default:
      throw ConfigError("measure '" + std::string(to_string(m)) + "' is not a post-hoc measure");
  }
}

/// Trains one task and computes the requested measures at its end.
///
/// Each step: minibatch task gradient (fed to online measures), optional
/// independent-batch and full-set gradients at the same parameters, penalty
/// gradient added, optimizer step, trace delivered to the accumulators.
inline TaskResult train_task(DenseNet& net, const Task& task, const RegularizerState& reg, Optimizer& optimizer,
                             std::span<const Measure> measures, const TrainSettings& settings,
                             const MeasureSettings& ms, std::uint64_t seed) {
  const auto& data = task.data.train;
  if (data.size() == 0) throw ConfigError("task '" + task.data.name + "' has no training data");
  if (settings.batch_size == 0) throw ConfigError("batch size must be positive");

  EpochSampler sampler(data.size(), settings.batch_size, derive_seed(seed, detail::kStreamBatches));
  Rng indep_rng(derive_seed(seed, detail::kStreamIndep));
  const std::size_t total_steps = settings.steps > 0 ? settings.steps : settings.epochs * sampler.steps_per_epoch();
  const std::size_t indep_batch = std::min(settings.batch_size, data.size());

  const FlatVector theta0(net.params().begin(), net.params().end());
  std::vector<OnlineAccumulator> online;
  std::vector<std::pair<Measure, SosAccumulator>> sos;
  bool want_indep = false, want_full = false;
  for (Measure m : measures) {
    if (auto k = online_kind(m)) {
      online.emplace_back(*k, theta0, OnlineOptions{ms.ema_decay, total_steps});
      want_indep |= needs_independent_gradient(*k);
      want_full |= needs_full_gradient(*k);
    } else if (is_sos(m)) {
      SosOptions so;
      if (const auto* a = optimizer.adam()) so.beta2 = a->config().beta2;
      so.alpha = m == Measure::sos_unbiased ? detail::resolve_sos_alpha(ms, indep_batch) : 0.0;
      want_indep |= so.alpha != 0.0;
      sos.emplace_back(m, SosAccumulator(net.param_count(), so));
    }
  }

  TaskResult result;
  auto& log = result.log;
  log.loss_start = mean_loss(net, data.view(), data.labels, task.head);
  const auto t_begin = std::chrono::steady_clock::now();

  const Adam* adam = optimizer.adam();
  FlatVector grad_total(net.param_count());
  for (std::size_t step = 0; step < total_steps; ++step) {
    const auto batch = gather(data, sampler.next(), task.head);
    auto task_grad = loss_and_grad(net, batch);
    if (!std::isfinite(task_grad.loss)) {
      throw TrainingDiverged("non-finite loss at step " + std::to_string(step) + " of " + task.data.name, log);
    }
    log.step_losses.push_back(task_grad.loss);
    log.clamped += task_grad.clamped;

    std::optional<LossGrad> indep, full;
    if (want_indep) {
      const auto idx = indep_rng.sample_with_replacement(data.size(), indep_batch);
      indep = loss_and_grad(net, gather(data, idx, task.head));
    }
    if (want_full) full = loss_and_grad(net, data.view(), data.labels, task.head);

    if (full && adam != nullptr) {
      const double b1 = adam->config().beta1;
      double noise = 0.0, mom = 0.0;
      for (std::size_t i = 0; i < grad_total.size(); ++i) {
        const double s = task_grad.grad[i] - full->grad[i];
        noise += (1.0 - b1) * s * s;
        mom += std::abs(b1 * adam->m()[i] * full->grad[i]);
      }
      log.noise_term += noise / double(grad_total.size());
      log.momentum_term += mom / double(grad_total.size());
    }

    std::copy(task_grad.grad.begin(), task_grad.grad.end(), grad_total.begin());
    add_penalty_grad(net.params(), reg, grad_total);
    FlatVector delta;
    try {
      delta = optimizer.step(grad_total, net.params());
    } catch (const DivergenceError& e) {
      throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(step), log);
    }

    StepTrace trace;
    trace.g_noisy = task_grad.grad;
    if (indep) trace.g_indep = std::span<const double>(indep->grad);
    if (full) trace.g_full = std::span<const double>(full->grad);
    trace.delta = delta;
    trace.v_snapshot = optimizer.second_moment();
    trace.lr_used = optimizer.lr();
    for (auto& acc : online) acc.accumulate(trace);
    for (auto& [m, acc] : sos) acc.accumulate(trace);
    ++log.steps;
  }
  if (log.steps > 0) {
    log.noise_term /= double(log.steps);
    log.momentum_term /= double(log.steps);
  }
  log.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  log.loss_end = mean_loss(net, data.view(), data.labels, task.head);

  const auto theta_end = net.params();
  for (const auto& acc : online) {
    const std::string id(to_string(acc.kind()));
    result.omega_tilde[id] = acc.omega_tilde();
    result.importances[id] = rescale(acc, theta_end, ms.xi);
  }
  result.summed = summed_importance_report(online, log.loss_start, log.loss_end);
  for (const auto& [m, acc] : sos) {
    auto iv = acc.importance();
    iv.measure_id = std::string(to_string(m));
    result.importances[iv.measure_id] = std::move(iv);
  }

  const std::size_t n_samples = std::min(ms.posthoc_samples, data.size());
  std::vector<std::size_t> sample;
  for (Measure m : measures) {
    if (m == Measure::none || online_kind(m) || is_sos(m)) continue;
    if (sample.empty()) sample = draw_sample(data.size(), n_samples, derive_seed(seed, detail::kStreamPosthoc));
    const auto t0 = std::chrono::steady_clock::now();
    auto iv = compute_posthoc(m, net, data, task.head, sample, ms, derive_seed(seed, detail::kStreamPosthoc));
    result.measure_seconds[iv.measure_id] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.importances[iv.measure_id] = std::move(iv);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Task sequences

/// Test accuracy of each task, routed to its head.
inline std::vector<double> evaluate(const DenseNet& net, std::span<const Task> tasks) {
  std::vector<double> acc;
  for (const auto& t : tasks) acc.push_back(accuracy(net, t.data.test.view(), t.data.test.labels, t.head));
  return acc;
}

inline double mean(std::span<const double> v) { return v.empty() ? 0.0 : sum(v) / static_cast<double>(v.size()); }

struct ContinualConfig {
  std::vector<std::size_t> hidden{256, 256};
  bool multi_head = false;  // task-incremental: one head per task
  OptimizerConfig optimizer{};
  Measure method = Measure::si;  // importance used by the penalty
  double c = 1.0;
  bool reinit = true;
  TrainSettings train{};
  MeasureSettings measures{};
  std::vector<Measure> tracked;  // additional measures computed for analysis
  std::uint64_t seed = 0;
};

struct TaskReport {
  std::string name;
  TrainingLog log;
  TaskResult result;
  std::vector<double> accuracies_after;  // tasks 0..k after training task k
};

struct RunReport {
  std::vector<double> accuracies;  // after the final task
  double mean_accuracy = 0.0;
  std::vector<TaskReport> tasks;
  std::uint64_t seed = 0;
  double seconds = 0.0;
  FlatVector final_params;
};

inline std::vector<Measure> measures_for_run(const ContinualConfig& cfg) {
  std::vector<Measure> ms;
  if (cfg.method != Measure::none) ms.push_back(cfg.method);
  for (Measure m : cfg.tracked) {
    if (m != Measure::none && std::find(ms.begin(), ms.end(), m) == ms.end()) ms.push_back(m);
  }
  return ms;
}

inline DenseNet make_network(const ContinualConfig& cfg, std::size_t input_dim, std::size_t n_classes,
                             std::size_t n_tasks) {
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(n_classes);
  return DenseNet(widths, cfg.multi_head ? n_tasks : 1);
}

inline constexpr std::uint64_t kStreamInit = 0x494e4954;

/// Runs the whole task sequence with one importance measure driving the penalty.
inline RunReport run_continual(std::span<const Task> tasks, const ContinualConfig& cfg) {
  if (tasks.empty()) throw ConfigError("continual run needs at least one task");
  const std::size_t dim = tasks.front().data.feature_dim();
  std::size_t n_classes = 0;
  for (const auto& t : tasks) {
    if (t.data.feature_dim() != dim) throw ConfigError("all tasks must share the input dimension");
    n_classes = std::max(n_classes, t.data.n_classes);
    if (cfg.multi_head ? t.head >= tasks.size() : t.head != 0) throw ConfigError("task head assignment mismatch");
  }
  const auto t_begin = std::chrono::steady_clock::now();
  DenseNet net = make_network(cfg, dim, n_classes, tasks.size());
  glorot_uniform_init(net, derive_seed(cfg.seed, kStreamInit));
  Optimizer optimizer(net.param_count(), cfg.optimizer);
  RegularizerState reg(cfg.c);
  const auto measures = measures_for_run(cfg);

  RunReport report;
  report.seed = cfg.seed;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (k > 0 && cfg.reinit) glorot_uniform_init(net, derive_seed(cfg.seed, kStreamInit + k));
    optimizer.reset();
    TaskReport tr;
    tr.name = tasks[k].data.name;
    tr.result = train_task(net, tasks[k], reg, optimizer, measures, cfg.train, cfg.measures,
                           derive_seed(cfg.seed, 1000 + k));
    tr.log = tr.result.log;
    if (cfg.method != Measure::none) {
      consolidate(reg, tr.result.importances.at(std::string(to_string(cfg.method))), net.params());
    }
    tr.accuracies_after = evaluate(net, tasks.first(k + 1));
    report.tasks.push_back(std::move(tr));
  }
  report.accuracies = evaluate(net, tasks);
  report.mean_accuracy = mean(report.accuracies);
  report.final_params.assign(net.params().begin(), net.params().end());
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  return report;
}

// ---------------------------------------------------------------------------
// Hyperparameter grid

/// {a * 10^i : i in [i_min, i_max], a in as}, ascending.
inline std::vector<double> c_grid(std::span<const double> as, int i_min, int i_max) {
  if (i_min > i_max) throw ConfigError("grid exponent range is empty");
  std::vector<double> out;
  for (int i = i_min; i <= i_max; ++i) {
    const double scale = std::pow(10.0, std::abs(i));
    for (double a : as) out.push_back(i >= 0 ? a * scale : a / scale);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct GridCell {
  double c = 0.0;
  bool reinit = true;
  std::vector<double> mean_accuracies;  // one per seed
  double score = 0.0;                   // mean over seeds
};

struct GridResult {
  std::vector<GridCell> cells;
  std::size_t best = 0;
};

/// Runs every (c, reinit, seed) cell; the best cell maximizes the seed-mean
/// accuracy on the tasks' evaluation sets, ties going to the smaller c.
inline GridResult grid_search(std::span<const Task> tasks, const ContinualConfig& base, std::span<const double> cs,
                              std::span<const bool> reinit_options, std::span<const std::uint64_t> seeds,
                              std::size_t jobs = 1) {
  if (cs.empty() || reinit_options.empty() || seeds.empty()) throw ConfigError("grid needs c values, reinit options and seeds");
  GridResult g;
  for (bool r : reinit_options) {
    for (double c : cs) g.cells.push_back({c, r, std::vector<double>(seeds.size(), 0.0), 0.0});
  }
  struct Job {
    std::size_t cell, seed_idx;
  };
  std::vector<Job> work;
  for (std::size_t ci = 0; ci < g.cells.size(); ++ci) {
    for (std::size_t si = 0; si < seeds.size(); ++si) work.push_back({ci, si});
  }
  std::size_t next = 0;
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      Job j;
      {
        std::lock_guard lock(mu);
        if (next >= work.size() || failure) return;
        j = work[next++];
      }
      try {
        ContinualConfig cfg = base;
        cfg.c = g.cells[j.cell].c;
        cfg.reinit = g.cells[j.cell].reinit;
        cfg.seed = seeds[j.seed_idx];
        const double acc = run_continual(tasks, cfg).mean_accuracy;
        std::lock_guard lock(mu);
        g.cells[j.cell].mean_accuracies[j.seed_idx] = acc;
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, work.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (auto& cell : g.cells) cell.score = mean(cell.mean_accuracies);
  for (std::size_t i = 1; i < g.cells.size(); ++i) {
    const auto& a = g.cells[i];
    const auto& b = g.cells[g.best];
    if (a.score > b.score || (a.score == b.score && a.c < b.c)) g.best = i;
  }
  return g;
}

}  // namespace clreg
