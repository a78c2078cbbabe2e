// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

using namespace clreg;
using namespace clreg::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [miss]");
  }
};

std::string num(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

std::span<const double> row(const LabeledSet& s, std::size_t i) {
  return {s.inputs.data() + i * s.feature_dim(), s.feature_dim()};
}

FlatVector elementwise(std::span<const double> v, double (*f)(double)) {
  FlatVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = f(v[i]);
  return out;
}

double sq(double x) { return x * x; }
double root(double x) { return std::sqrt(x); }

double corr(std::span<const double> a, std::span<const double> b) { return pearson(a, b).value_or(0.0); }

// ---------------------------------------------------------------------------
// Desk-scale benchmark. The shared task has 15000 training examples with
// overlapping clusters, so minibatch noise is not negligible next to the
// full gradient during training.

constexpr std::size_t kDeskPerClass = 1500;
constexpr double kDeskSpread = 0.3;
const std::vector<std::size_t> kDeskHidden{256, 256};

BenchmarkConfig desk_benchmark(std::size_t n_tasks, std::size_t dim, std::size_t per_class, double spread,
                               double active_fraction = 1.0) {
  BenchmarkConfig b;
  b.kind = BenchmarkKind::synthetic;
  b.scenario = Scenario::permuted;
  b.n_tasks = n_tasks;
  b.task_seed = 7;
  b.synthetic = {.seed = 3, .dim = dim, .n_classes = 10, .n_per_class = per_class, .n_test_per_class = 60,
                 .cluster_spread = spread, .active_fraction = active_fraction};
  return b;
}

std::vector<Task> desk_tasks(const BenchmarkConfig& b) { return make_tasks(b, load_base_dataset(b), false); }

ContinualConfig desk_run(std::vector<std::size_t> hidden, std::size_t batch, std::size_t epochs) {
  ContinualConfig cfg;
  cfg.hidden = std::move(hidden);
  cfg.train.batch_size = batch;
  cfg.train.epochs = epochs;
  cfg.measures.posthoc_samples = 1000;
  return cfg;
}

// ---------------------------------------------------------------------------
// 1. Exact identities

Outcome criterion_identities() {
  Outcome o;

  // SIB + SIU == SI on a dyadic stream, where every product and partial sum
  // is exactly representable.
  {
    const std::size_t n = 64, steps = 2000;
    Rng rng(1);
    const FlatVector start(n, 0.0);
    OnlineAccumulator si(OnlineKind::si, start), siu(OnlineKind::siu, start), sib(OnlineKind::sib, start);
    auto dyadic = [&] { return double(int(rng.below(129)) - 64) / 16.0; };
    for (std::size_t s = 0; s < steps; ++s) {
      FlatVector g(n), gi(n), d(n);
      for (std::size_t i = 0; i < n; ++i) {
        g[i] = dyadic();
        gi[i] = dyadic();
        d[i] = dyadic() / 64.0;
      }
      StepTrace t;
      t.g_noisy = g;
      t.g_indep = std::span<const double>(gi);
      t.delta = d;
      si.accumulate(t);
      siu.accumulate(t);
      sib.accumulate(t);
    }
    std::size_t exact = 0;
    for (std::size_t i = 0; i < n; ++i) exact += sib.omega_tilde()[i] + siu.omega_tilde()[i] == si.omega_tilde()[i];
    o.check(exact == n, "SIB+SIU==SI bit-exact on " + std::to_string(exact) + "/" + std::to_string(n));
  }

  // Same decomposition inside real training: per-parameter gap against the
  // accumulated rounding budget.
  {
    auto b = desk_benchmark(1, 16, 40, 0.15);
    const auto tasks = desk_tasks(b);
    auto cfg = desk_run({16}, 32, 3);
    DenseNet net = make_network(cfg, 16, 10, 1);
    glorot_uniform_init(net, 1);
    Optimizer opt(net.param_count(), cfg.optimizer);
    const std::vector<Measure> ms{Measure::si, Measure::siu, Measure::sib};
    const auto r = train_task(net, tasks[0], RegularizerState{}, opt, ms, cfg.train, cfg.measures, 2);
    const auto& si = r.omega_tilde.at("si");
    const auto& siu = r.omega_tilde.at("siu");
    const auto& sib = r.omega_tilde.at("sib");
    double worst = 0.0, scale = 0.0;
    std::size_t exact = 0;
    for (std::size_t i = 0; i < si.size(); ++i) {
      worst = std::max(worst, std::abs(sib[i] + siu[i] - si[i]));
      scale = std::max({scale, std::abs(si[i]), std::abs(siu[i]), std::abs(sib[i])});
      exact += sib[i] + siu[i] == si[i];
    }
    const double budget = 4.0 * double(r.log.steps) * std::numeric_limits<double>::epsilon() * scale;
    o.check(worst <= budget, "training run: " + std::to_string(exact) + "/" + std::to_string(si.size()) +
                                 " bit-exact, max gap " + num(worst) + " <= rounding budget " + num(budget));
  }

  // Rescaling hand cases.
  {
    const FlatVector w{2.0, -1.0, 3.0, 0.5};
    const FlatVector start{0.0, 0.0, 1.0, 2.0};
    const FlatVector end{1.0, 5.0, 1.0, 4.0};
    const auto iv = rescale(w, start, end, 1.0);
    const FlatVector expected{1.0, 0.0, 3.0, 0.1};
    o.check(max_abs_diff(iv.values, expected) <= 1e-15, "rescale hand cases");
  }

  // Penalty gradient against central differences.
  {
    Rng rng(3);
    const std::size_t n = 50;
    RegularizerState reg(2.5);
    FlatVector theta(n);
    reg.anchor.resize(n);
    reg.omega_acc.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      theta[i] = rng.normal();
      reg.anchor[i] = rng.normal();
      reg.omega_acc[i] = rng.uniform(0.0, 4.0);
    }
    const auto pg = penalty_and_grad(theta, reg);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      FlatVector up = theta, dn = theta;
      up[i] += 1e-5;
      dn[i] -= 1e-5;
      const double fd = (penalty_and_grad(up, reg).penalty - penalty_and_grad(dn, reg).penalty) / 2e-5;
      worst = std::max(worst, std::abs(fd - pg.grad[i]));
    }
    o.check(worst <= 1e-8, "penalty gradient vs differences " + num(worst));
  }

  // Backprop against central differences of the loss.
  {
    double worst = 0.0;
    for (const auto& widths : {std::vector<std::size_t>{4, 3}, std::vector<std::size_t>{5, 7, 6, 3},
                               std::vector<std::size_t>{6, 8, 8, 4}}) {
      auto net = random_net(widths, 21);
      const Matrix x = random_inputs(6, widths.front(), 22);
      const auto y = random_labels(6, widths.back(), 23);
      const auto lg = loss_and_grad(net, view(x), y, 0);
      const auto fd = finite_difference(net, [&] { return mean_loss(net, view(x), y, 0); });
      worst = std::max(worst, relative_l2(lg.grad, fd));
    }
    o.check(worst <= 1e-6, "backprop vs differences relative " + num(worst));
  }

  // Optimizer hand steps.
  {
    Adam adam(1);
    FlatVector p{0.0};
    const double d1 = adam.step(FlatVector{0.5}, p)[0];
    const double d2 = adam.step(FlatVector{-1.0}, p)[0];
    // Hand recurrences for the second step.
    const double m2 = 0.9 * 0.05 + 0.1 * -1.0, v2 = 0.999 * 0.00025 + 0.001 * 1.0;
    const double m_hat = m2 / (1 - 0.81), v_hat = v2 / (1 - 0.999 * 0.999);
    const double expect2 = -0.001 * m_hat / (std::sqrt(v_hat) + 1e-8);
    const double expect1 = -0.001 * 0.5 / (0.5 + 1e-8);
    Sgd sgd(1, {0.1, 0.9});
    FlatVector q{0.0};
    sgd.step(FlatVector{2.0}, q);
    const double s2 = sgd.step(FlatVector{2.0}, q)[0];
    const double gap = std::max({std::abs(d1 - expect1), std::abs(d2 - expect2), std::abs(s2 - -0.38)});
    o.check(gap <= 1e-12, "Adam/SGD hand steps " + num(gap));
  }
  return o;
}

// ---------------------------------------------------------------------------
// 2. Oracle equivalences

Outcome criterion_oracles() {
  Outcome o;
  {
    double worst = 0.0;
    for (std::size_t classes : {2u, 3u, 4u}) {
      const auto net = random_net({3, 5, classes}, 10 + classes);
      const auto data = make_set(random_inputs(4, 3, 20 + classes), random_labels(4, classes, 30));
      const auto f = fisher_diag(net, data, 0, FisherMode::exact_expectation, iota_indices(4));
      FlatVector oracle(net.param_count(), 0.0);
      for (std::size_t i = 0; i < 4; ++i) {
        const Matrix x = data.inputs.row(Eigen::Index(i));
        const auto q = oracle_softmax(oracle_logits(net, x, 0)[0]);
        for (int y = 0; y < int(classes); ++y) {
          const auto g = per_example_label_grad(net, row(data, i), y);
          for (std::size_t k = 0; k < g.size(); ++k) oracle[k] += q[y] * g[k] * g[k] / 4.0;
        }
      }
      worst = std::max(worst, max_abs_diff(f.values, oracle));
    }
    o.check(worst <= 1e-12, "exact Fisher vs label sum " + num(worst));
  }
  {
    const auto net = random_net({4, 6, 3}, 111);
    const auto data = make_set(random_inputs(5, 4, 112), random_labels(5, 3, 113));
    FlatVector oracle(net.param_count(), 0.0);
    for (std::size_t i = 0; i < 5; ++i) {
      const Matrix x = data.inputs.row(Eigen::Index(i));
      const auto q = oracle_softmax(oracle_logits(net, x, 0)[0]);
      FlatVector d(net.param_count(), 0.0);
      for (int y = 0; y < 3; ++y) {
        const auto g = per_example_label_grad(net, row(data, i), y);
        for (std::size_t k = 0; k < g.size(); ++k) d[k] += 2.0 * q[y] * (-q[y] * g[k]);
      }
      for (std::size_t k = 0; k < d.size(); ++k) oracle[k] += std::abs(d[k]) / 5.0;
    }
    const double gap = max_abs_diff(mas(net, data, 0, iota_indices(5)).values, oracle);
    o.check(gap <= 1e-12, "MAS vs chain rule " + num(gap));
  }
  {
    // Linear softmax model with random weights and noisy labels: the mean
    // gradient is comparable to the per-example spread.
    const std::size_t b = 4, n = 60;
    const auto net = random_net({3, 2}, 101);
    const auto data = make_set(random_inputs(n, 3, 102), random_labels(n, 2, 103));
    const auto full = loss_and_grad(net, view(data.inputs), data.labels, 0).grad;
    const auto ef = fisher_diag(net, data, 0, FisherMode::empirical, iota_indices(n));
    FlatVector expected(full.size());
    for (std::size_t k = 0; k < full.size(); ++k) expected[k] = (double(b) - 1.0) * full[k] * full[k] + ef.values[k];
    const auto bef = batch_ef(net, data, 0, b, 100000, 7);
    const double err = relative_l2(bef.values, expected);
    o.check(err <= 0.02, "Batch-EF identity at 1e5 batches " + num(err));
  }
  {
    double worst = 0.0;
    for (std::size_t b : {8u, 64u}) {
      const double g = 0.4, s = 1.1, a = sos_alpha(b);
      Rng rng(9 + b);
      double acc = 0.0;
      const int draws = 100000;
      for (int k = 0; k < draws; ++k) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
          m1 += g + s * rng.normal();
          m2 += g + s * rng.normal();
        }
        m1 /= double(b);
        m2 /= double(b);
        acc += (m1 - a * m2) * (m1 - a * m2);
      }
      const double expected = (1.0 + a * a) / double(b) * (g * g + s * s);
      worst = std::max(worst, std::abs(acc / draws / expected - 1.0));
    }
    o.check(worst <= 0.02, "SOS alpha identity " + num(worst));
  }
  {
    const std::size_t dim = 4, n = 100000;
    const std::vector<double> sd{0.5, 1.0, 2.0, 3.0};
    Rng rng(81);
    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) x(Eigen::Index(i), Eigen::Index(j)) = sd[j] * rng.normal();
    }
    DenseNet net({dim, 2});
    const auto data = make_set(x, std::vector<int>(n, 0));
    const auto af = absolute_fisher(net, data, 0, FisherMode::empirical, iota_indices(n));
    double worst = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      worst = std::max(worst, std::abs(af.values[j] / (std::sqrt(2.0 / std::numbers::pi) * 0.5 * sd[j]) - 1.0));
    }
    o.check(worst <= 0.03, "folded-normal AF " + num(worst));
  }
  return o;
}

// ---------------------------------------------------------------------------
// 3. MAS chain

Outcome criterion_mas_chain() {
  Outcome o;
  const auto tasks = desk_tasks(desk_benchmark(1, 64, kDeskPerClass, kDeskSpread));
  auto cfg = desk_run(kDeskHidden, 64, 5);
  DenseNet net = make_network(cfg, 64, 10, 1);
  glorot_uniform_init(net, 1);
  Optimizer opt(net.param_count(), cfg.optimizer);
  train_task(net, tasks[0], RegularizerState{}, opt, std::vector<Measure>{}, cfg.train, cfg.measures, 1);
  const auto& train = tasks[0].data.train;
  const double acc = accuracy(net, train.view(), train.labels, 0);
  o.check(acc >= 0.95, "train accuracy " + num(acc));

  const auto idx = draw_sample(train.size(), 1000, 5);
  const auto m = mas(net, train, 0, idx);
  const auto mx = masx(net, train, 0, idx);
  const auto af = absolute_fisher(net, train, 0, FisherMode::exact_expectation, idx);
  const auto f = fisher_diag(net, train, 0, FisherMode::exact_expectation, idx);
  const double r1 = corr(m.values, mx.values);
  const double r2 = corr(mx.values, af.values);
  const double r3 = corr(m.values, elementwise(f.values, root));
  const double r4 = corr(elementwise(af.values, sq), f.values);
  o.check(r1 > 0.95, "r(MAS,MASX) " + num(r1));
  o.check(r2 > 0.95, "r(MASX,AF) " + num(r2));
  o.check(r3 > 0.85, "r(MAS,sqrtF) " + num(r3));
  o.check(r4 > 0.9, "r(AF^2,F) " + num(r4));
  return o;
}

// ---------------------------------------------------------------------------
// 4. SI bias dominance

Outcome criterion_si_bias() {
  Outcome o;
  const auto tasks = desk_tasks(desk_benchmark(1, 64, kDeskPerClass, kDeskSpread));
  auto cfg = desk_run(kDeskHidden, 64, 5);
  double si = 0.0, siu = 0.0, full = 0.0;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    DenseNet net = make_network(cfg, 64, 10, 1);
    glorot_uniform_init(net, derive_seed(seed, kStreamInit));
    Optimizer opt(net.param_count(), cfg.optimizer);
    const std::vector<Measure> ms{Measure::si, Measure::siu, Measure::path_integral_full};
    const auto r = train_task(net, tasks[0], RegularizerState{}, opt, ms, cfg.train, cfg.measures, seed);
    std::cout << "  seed " << seed << ": SI/SIU " << num(*r.summed.find("si") / *r.summed.find("siu")) << "\n";
    si += *r.summed.find("si");
    siu += *r.summed.find("siu");
    full += *r.summed.find("path_integral_full");
  }
  const double ratio = si / siu;
  const double gap = std::abs(full - siu) / std::max(std::abs(full), std::abs(siu));
  o.check(ratio >= 2.0 && ratio <= 12.0, "sum SI / sum SIU " + num(ratio));
  o.check(gap < 0.15, "path integral vs SIU gap " + num(gap));
  return o;
}

// ---------------------------------------------------------------------------
// 5. SI versus SOS

Outcome criterion_si_sos() {
  Outcome o;
  const auto tasks = desk_tasks(desk_benchmark(3, 64, kDeskPerClass, kDeskSpread));
  auto cfg = desk_run(kDeskHidden, 64, 5);
  cfg.tracked = {Measure::sos};
  auto correlations = [&](double c) {
    cfg.c = c;
    const auto r = run_continual(tasks, cfg);
    std::vector<double> out;
    for (const auto& t : r.tasks) out.push_back(corr(t.result.importances.at("si").values, t.result.importances.at("sos").values));
    return out;
  };
  const auto weak = correlations(0.0);
  const auto strong = correlations(100.0);
  for (std::size_t k = 0; k < weak.size(); ++k) {
    std::cout << "  task " << k << ": r weak " << num(weak[k]) << ", strong " << num(strong[k]) << "\n";
  }
  const double weak_min = *std::min_element(weak.begin(), weak.end());
  o.check(weak_min > 0.9, "weak r(SI,SOS) per task min " + num(weak_min));
  double weak_late = 0.0, strong_late = 0.0;
  for (std::size_t k = 1; k < weak.size(); ++k) {
    weak_late += weak[k];
    strong_late += strong[k];
  }
  weak_late /= double(weak.size() - 1);
  strong_late /= double(weak.size() - 1);
  o.check(strong_late < weak_late, "later tasks r strong " + num(strong_late) + " < weak " + num(weak_late));
  return o;
}

// ---------------------------------------------------------------------------
// 6. Performance orderings

struct MethodRun {
  Measure method;
  std::size_t batch;
  std::size_t epochs;
};

Outcome criterion_orderings() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  // Sparse templates: dense clusters make permuted copies of one task
  // interfere so strongly that no regularizer retains much.
  const auto bench = desk_benchmark(5, 64, 400, 0.4, 0.3);
  const auto tasks = desk_tasks(bench);
  const auto validation = with_validation(tasks);
  const std::size_t train_n = tasks[0].data.train.size();
  const std::size_t small_batch = 64, small_epochs = 3;
  const std::size_t large_batch = train_n / 4;
  const std::size_t steps = small_epochs * ((train_n + small_batch - 1) / small_batch);

  const std::vector<double> as{1, 2, 5};
  const auto cs = c_grid(as, -1, 3);
  const bool reinit[] = {true, false};
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  // A large-batch run costs train/4 / 64 times more per step, so its grid
  // is scored on one seed; every final number is a 3-seed test mean.
  const std::vector<std::uint64_t> large_grid_seeds{0};

  auto best_test_accuracy = [&](Measure method, std::size_t batch) {
    ContinualConfig cfg = desk_run({128, 128}, batch, small_epochs);
    cfg.method = method;
    cfg.train.steps = steps;
    const auto grid = grid_search(validation, cfg, cs, reinit, batch == small_batch ? seeds : large_grid_seeds);
    const auto& best = grid.cells[grid.best];
    cfg.c = best.c;
    cfg.reinit = best.reinit;
    double acc = 0.0;
    for (auto s : seeds) {
      cfg.seed = s;
      acc += run_continual(tasks, cfg).mean_accuracy;
    }
    acc /= double(seeds.size());
    std::cout << "  " << to_string(method) << " batch " << batch << ": c=" << best.c << " reinit=" << best.reinit
              << " test " << num(100 * acc, 5) << "%\n";
    return acc;
  };

  const double si = best_test_accuracy(Measure::si, small_batch);
  const double siu = best_test_accuracy(Measure::siu, small_batch);
  const double sib = best_test_accuracy(Measure::sib, small_batch);
  const double sos = best_test_accuracy(Measure::sos, small_batch);
  const double si_large = best_test_accuracy(Measure::si, large_batch);
  const double sos_large = best_test_accuracy(Measure::sos_unbiased, large_batch);
  o.check(si > siu, "SI " + num(100 * si) + " > SIU " + num(100 * siu));
  o.check(sib >= si - 0.005, "SIB " + num(100 * sib) + " >= SI - 0.5pp");
  // Accuracies are means over a fixed number of test examples, so drops are
  // compared in whole examples; a floating-point tie must not count.
  const double quantum = 1.0 / double(tasks[0].data.test.size() * tasks.size() * seeds.size());
  const long long drop_si = std::llround((si - si_large) / quantum);
  const long long drop_sos = std::llround((sos - sos_large) / quantum);
  o.check(drop_si > drop_sos, "large-batch drop SI " + num(100 * drop_si * quantum) + "pp > SOS " +
                                  num(100 * drop_sos * quantum) + "pp");
  const double elapsed = seconds_since(t0);
  o.check(elapsed <= 3600.0, "runtime " + num(elapsed) + "s");
  return o;
}

// ---------------------------------------------------------------------------
// 7. Batch-EF speed

Outcome criterion_batch_ef_speed() {
  Outcome o;
  const auto tasks = desk_tasks(desk_benchmark(1, 784, 1100, 0.25));
  auto cfg = desk_run({256, 256}, 256, 2);
  DenseNet net = make_network(cfg, 784, 10, 1);
  glorot_uniform_init(net, 1);
  Optimizer opt(net.param_count(), cfg.optimizer);
  train_task(net, tasks[0], RegularizerState{}, opt, std::vector<Measure>{}, cfg.train, cfg.measures, 1);
  const auto& train = tasks[0].data.train;

  const std::size_t b = 256, budget = 40 * b;
  const auto idx = draw_sample(train.size(), budget, 11);
  auto t = std::chrono::steady_clock::now();
  const auto ef = fisher_diag(net, train, 0, FisherMode::empirical, idx);
  const double t_ef = seconds_since(t);
  t = std::chrono::steady_clock::now();
  const auto bef = batch_ef(net, train, 0, b, idx);
  const double t_bef = seconds_since(t);
  const double speedup = t_ef / t_bef;
  const double r = corr(bef.values, ef.values);
  o.check(speedup >= 50.0, "speedup " + num(speedup) + "x (EF " + num(t_ef) + "s, Batch-EF " + num(t_bef) + "s)");
  o.check(r > 0.8, "r(Batch-EF,EF) " + num(r));
  return o;
}

// ---------------------------------------------------------------------------
// 8. Gradient noise

Outcome criterion_noise() {
  Outcome o;
  const auto tasks = desk_tasks(desk_benchmark(1, 64, 2 * kDeskPerClass, kDeskSpread));
  const auto& train = tasks[0].data.train;
  auto cfg = desk_run(kDeskHidden, 256, 5);
  {
    DenseNet net = make_network(cfg, 64, 10, 1);
    glorot_uniform_init(net, 1);
    NoiseSettings ns;
    ns.batch_size = 256;
    ns.steps = 5 * ((train.size() + 255) / 256);
    ns.record_every = 4;
    const auto prof = noise_profile(net, train, 0, ns);
    std::vector<double> mid;
    std::cout << "  " << prof.samples.size() << " recorded steps, overall median " << num(prof.median_ratio()) << "\n";
    for (const auto& s : prof.samples) {
      if (s.step >= ns.steps / 4 && s.step < 3 * ns.steps / 4) mid.push_back(s.ratio);
    }
    std::sort(mid.begin(), mid.end());
    const double median = mid[mid.size() / 2];
    o.check(median > 1.0, "mid-training median ratio " + num(median));
  }
  {
    DenseNet net = make_network(cfg, 64, 10, 1);
    glorot_uniform_init(net, 1);
    NoiseSettings ns;
    ns.batch_size = train.size();
    ns.steps = 20;
    const auto prof = noise_profile(net, train, 0, ns);
    bool zero = true;
    for (const auto& s : prof.samples) zero = zero && s.ratio == 0.0 && s.noise_sq == 0.0;
    o.check(zero, "full-batch ratio identically 0");
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"exact identities", criterion_identities},     {"oracle equivalences", criterion_oracles},
      {"MAS chain", criterion_mas_chain},             {"SI bias dominance", criterion_si_bias},
      {"SI and SOS", criterion_si_sos},               {"performance orderings", criterion_orderings},
      {"Batch-EF speed", criterion_batch_ef_speed},   {"gradient noise", criterion_noise}};
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoul(argv[i]));

  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!selected.empty() && !selected.count(k + 1)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << k + 1 << " (" << criteria[k].first << ", "
              << num(seconds_since(t0), 3) << "s): " << o.detail.str() << std::endl;
  }
  return all ? 0 : 1;
}
