#pragma once

// Transfer experiments: learn a leaf from related source tasks, then fit a held-out task on
// that leaf and compare against scratch training and a nearest-source warm start.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "foliate/config.hpp"
#include "foliate/group.hpp"
#include "foliate/learning.hpp"
#include "foliate/numeric.hpp"
#include "foliate/pendulum.hpp"
#include "foliate/relate.hpp"
#include "foliate/task_space.hpp"

namespace foliate {

enum class Strategy { Scratch, LeafConstrained, SimilarityWarmStart, GroundTruthLeaf };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Scratch: return "Scratch";
    case Strategy::LeafConstrained: return "LeafConstrained";
    case Strategy::SimilarityWarmStart: return "SimilarityWarmStart";
    case Strategy::GroundTruthLeaf: return "GroundTruthLeaf";
  }
  return "unknown";
}

inline Strategy strategy_from_string(std::string_view name) {
  for (auto s : {Strategy::Scratch, Strategy::LeafConstrained, Strategy::SimilarityWarmStart, Strategy::GroundTruthLeaf})
    if (name == to_string(s)) return s;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

struct ExperimentConfig {
  std::string task_family = "sinusoid";  // sinusoid | pendulum
  GroupFamily group = GroupFamily::affine();
  std::size_t k_source = 4;
  std::size_t n_per_task = 20;
  double noise_sigma = 0.05;
  std::size_t budget_iters = 2000;
  std::size_t trials = 50;
  std::uint64_t seed = 1;
  std::vector<Strategy> strategies{Strategy::Scratch, Strategy::LeafConstrained, Strategy::SimilarityWarmStart};
  double gd_step = 0.5;
  /// Gradient sup-norm at which a run counts as converged.
  double gd_tol = 1e-6;
  /// Sinusoid model space: {1, sin kx, cos kx : k <= harmonics}; leaf frequencies are drawn from 1..harmonics.
  std::size_t harmonics = 3;
  std::size_t eval_grid = 201;

  void validate() const {
    if (task_family != "sinusoid" && task_family != "pendulum")
      throw ConfigError("task_family must be 'sinusoid' or 'pendulum', got '" + task_family + "'");
    if (task_family == "sinusoid" && group.kind == GroupKind::Rotation2D)
      throw ConfigError("group rotation2d does not act on sinusoid tasks");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (k_source < 2) throw ConfigError("k_source must be >= 2");
    if (n_per_task < 1) throw ConfigError("n_per_task must be >= 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (strategies.empty()) throw ConfigError("at least one strategy is required");
    if (!(gd_step > 0.0) || !(gd_tol > 0.0)) throw ConfigError("gd_step and gd_tol must be positive");
    if (harmonics < 1) throw ConfigError("harmonics must be >= 1");
    if (eval_grid < 2) throw ConfigError("eval_grid must be >= 2");
    if (task_family == "pendulum" && k_source > 24) throw ConfigError("pendulum preset has at most 24 source tasks");
  }
};

inline const std::set<std::string>& experiment_config_keys() {
  static const std::set<std::string> keys{"task_family", "group",   "k_source", "n_per_task", "noise_sigma",
                                          "budget_iters", "trials", "seed",     "strategies", "gd_step",
                                          "gd_tol",       "harmonics", "eval_grid"};
  return keys;
}

inline KeyValues to_key_values(const ExperimentConfig& c) {
  std::string strategies;
  for (auto s : c.strategies) strategies += (strategies.empty() ? "" : ",") + to_string(s);
  return {{"task_family", c.task_family},
          {"group", std::string(to_string(c.group.kind))},
          {"k_source", std::to_string(c.k_source)},
          {"n_per_task", std::to_string(c.n_per_task)},
          {"noise_sigma", format_shortest(c.noise_sigma)},
          {"budget_iters", std::to_string(c.budget_iters)},
          {"trials", std::to_string(c.trials)},
          {"seed", std::to_string(c.seed)},
          {"strategies", strategies},
          {"gd_step", format_shortest(c.gd_step)},
          {"gd_tol", format_shortest(c.gd_tol)},
          {"harmonics", std::to_string(c.harmonics)},
          {"eval_grid", std::to_string(c.eval_grid)}};
}

/// Applies key/value pairs on top of `base`; unknown keys are rejected.
inline ExperimentConfig experiment_config_from(const KeyValues& kv, ExperimentConfig base = {}) {
  reject_unknown_keys(kv, experiment_config_keys());
  for (const auto& [k, v] : kv) {
    if (k == "task_family") base.task_family = v;
    else if (k == "group") {
      try {
        base.group = GroupFamily{group_kind_from_string(v)};
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (k == "k_source") base.k_source = parse_count(k, v);
    else if (k == "n_per_task") base.n_per_task = parse_count(k, v);
    else if (k == "noise_sigma") base.noise_sigma = parse_real(k, v);
    else if (k == "budget_iters") base.budget_iters = parse_count(k, v);
    else if (k == "trials") base.trials = parse_count(k, v);
    else if (k == "seed") base.seed = parse_count(k, v);
    else if (k == "gd_step") base.gd_step = parse_real(k, v);
    else if (k == "gd_tol") base.gd_tol = parse_real(k, v);
    else if (k == "harmonics") base.harmonics = parse_count(k, v);
    else if (k == "eval_grid") base.eval_grid = parse_count(k, v);
    else if (k == "strategies") {
      base.strategies.clear();
      std::size_t start = 0;
      while (start <= v.size()) {
        auto comma = v.find(',', start);
        auto item = trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (!item.empty()) base.strategies.push_back(strategy_from_string(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
  }
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------
// Report

struct TrialRow {
  std::string strategy;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  /// Mean squared error against the noise-free held-out task on the evaluation grid.
  double final_loss = 0.0;
  /// Training objective at the end of the run.
  double train_loss = 0.0;
  /// Iteration at which the gradient tolerance was met; empty when the budget ran out.
  std::optional<std::size_t> iterations_to_tol;
  std::size_t params_optimized = 0;
  std::size_t budget_iters = 0;
  std::size_t n_train = 0;
  /// Training objective after each iteration (entry 0 = start).
  std::vector<double> loss_curve;

  bool operator==(const TrialRow&) const = default;
};

struct StrategySummary {
  std::string strategy;
  double median_final_loss = 0.0;
  double median_train_loss = 0.0;
  std::size_t reached_tol = 0;
  std::size_t trials = 0;
  bool operator==(const StrategySummary&) const = default;
};

struct TransferReport {
  KeyValues config;
  std::vector<TrialRow> rows;
  std::vector<StrategySummary> summaries;
  /// Fraction of trials in which LeafConstrained ends with a strictly lower final_loss than Scratch.
  std::optional<double> win_rate;
  bool budget_fair = true;
  /// params_optimized(LeafConstrained) < params_optimized(Scratch) in every trial.
  bool leaf_smaller_every_trial = true;

  bool operator==(const TransferReport&) const = default;
};

inline void to_json(nlohmann::json& j, const TrialRow& r) {
  j = nlohmann::json{{"strategy", r.strategy},
                     {"trial", r.trial},
                     {"seed", r.seed},
                     {"final_loss", r.final_loss},
                     {"train_loss", r.train_loss},
                     {"iterations_to_tol", r.iterations_to_tol ? nlohmann::json(*r.iterations_to_tol) : nlohmann::json()},
                     {"params_optimized", r.params_optimized},
                     {"budget_iters", r.budget_iters},
                     {"n_train", r.n_train},
                     {"loss_curve", r.loss_curve}};
}

inline void from_json(const nlohmann::json& j, TrialRow& r) {
  j.at("strategy").get_to(r.strategy);
  j.at("trial").get_to(r.trial);
  j.at("seed").get_to(r.seed);
  j.at("final_loss").get_to(r.final_loss);
  j.at("train_loss").get_to(r.train_loss);
  if (j.at("iterations_to_tol").is_null()) r.iterations_to_tol.reset();
  else r.iterations_to_tol = j.at("iterations_to_tol").get<std::size_t>();
  j.at("params_optimized").get_to(r.params_optimized);
  j.at("budget_iters").get_to(r.budget_iters);
  j.at("n_train").get_to(r.n_train);
  j.at("loss_curve").get_to(r.loss_curve);
}

inline void to_json(nlohmann::json& j, const StrategySummary& s) {
  j = nlohmann::json{{"strategy", s.strategy},
                     {"median_final_loss", s.median_final_loss},
                     {"median_train_loss", s.median_train_loss},
                     {"reached_tol", s.reached_tol},
                     {"trials", s.trials}};
}

inline void from_json(const nlohmann::json& j, StrategySummary& s) {
  j.at("strategy").get_to(s.strategy);
  j.at("median_final_loss").get_to(s.median_final_loss);
  j.at("median_train_loss").get_to(s.median_train_loss);
  j.at("reached_tol").get_to(s.reached_tol);
  j.at("trials").get_to(s.trials);
}

inline void to_json(nlohmann::json& j, const TransferReport& r) {
  j = nlohmann::json{{"kind", "transfer"},
                     {"config", r.config},
                     {"rows", r.rows},
                     {"summaries", r.summaries},
                     {"win_rate", r.win_rate ? nlohmann::json(*r.win_rate) : nlohmann::json()},
                     {"budget_fair", r.budget_fair},
                     {"leaf_smaller_every_trial", r.leaf_smaller_every_trial}};
}

inline void from_json(const nlohmann::json& j, TransferReport& r) {
  if (j.value("kind", std::string{}) != "transfer") throw std::invalid_argument("not a transfer report");
  j.at("config").get_to(r.config);
  j.at("rows").get_to(r.rows);
  j.at("summaries").get_to(r.summaries);
  if (j.at("win_rate").is_null()) r.win_rate.reset();
  else r.win_rate = j.at("win_rate").get<double>();
  j.at("budget_fair").get_to(r.budget_fair);
  j.at("leaf_smaller_every_trial").get_to(r.leaf_smaller_every_trial);
}

/// Fills summaries, win rate and the fairness / dimension flags from the rows.
inline void aggregate(TransferReport& report) {
  report.summaries.clear();
  std::vector<std::string> order;
  for (const auto& row : report.rows)
    if (std::find(order.begin(), order.end(), row.strategy) == order.end()) order.push_back(row.strategy);
  for (const auto& name : order) {
    StrategySummary s;
    s.strategy = name;
    std::vector<double> finals, trains;
    for (const auto& row : report.rows)
      if (row.strategy == name) {
        finals.push_back(row.final_loss);
        trains.push_back(row.train_loss);
        if (row.iterations_to_tol) ++s.reached_tol;
      }
    s.trials = finals.size();
    s.median_final_loss = median(finals);
    s.median_train_loss = median(trains);
    report.summaries.push_back(s);
  }

  std::map<std::size_t, std::vector<const TrialRow*>> by_trial;
  for (const auto& row : report.rows) by_trial[row.trial].push_back(&row);
  report.budget_fair = true;
  report.leaf_smaller_every_trial = true;
  std::size_t compared = 0, wins = 0;
  for (const auto& [trial, rows] : by_trial) {
    const TrialRow* scratch = nullptr;
    const TrialRow* leaf = nullptr;
    for (const auto* r : rows) {
      if (r->budget_iters != rows.front()->budget_iters || r->n_train != rows.front()->n_train) report.budget_fair = false;
      if (r->strategy == to_string(Strategy::Scratch)) scratch = r;
      if (r->strategy == to_string(Strategy::LeafConstrained)) leaf = r;
    }
    if (scratch && leaf) {
      ++compared;
      if (leaf->final_loss < scratch->final_loss) ++wins;
      if (!(leaf->params_optimized < scratch->params_optimized)) report.leaf_smaller_every_trial = false;
    }
  }
  if (compared > 0) report.win_rate = static_cast<double>(wins) / static_cast<double>(compared);
  else {
    report.win_rate.reset();
    report.leaf_smaller_every_trial = false;
  }
}

// ---------------------------------------------------------------------------
// Trials

namespace detail {

inline LearnerConfig budget_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  LearnerConfig lc;
  lc.method = FitMethod::GradientDescent;
  lc.max_iters = cfg.budget_iters;
  lc.step = cfg.gd_step;
  lc.tol = cfg.gd_tol;
  lc.seed = seed;
  return lc;
}

template <class Input>
TrialRow make_row(Strategy s, std::size_t trial, std::uint64_t seed, const FitResult& fit, double test_loss,
                  std::size_t params, const ExperimentConfig& cfg, std::size_t n_train) {
  TrialRow row;
  row.strategy = to_string(s);
  row.trial = trial;
  row.seed = seed;
  row.final_loss = test_loss;
  row.train_loss = fit.final_loss;
  if (fit.converged) row.iterations_to_tol = fit.iterations_used;
  row.params_optimized = params;
  row.budget_iters = cfg.budget_iters;
  row.n_train = n_train;
  for (const auto& p : fit.loss_curve) row.loss_curve.push_back(p.loss);
  return row;
}

template <class Input>
double test_mse(const ModelSpace<Input>& space, std::span<const double> theta, std::span<const Input> xs,
                std::span<const double> truth) {
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = predict(space, theta, xs[i]) - truth[i];
    acc += e * e;
  }
  return acc / static_cast<double>(xs.size());
}

/// Coefficients of A sin(omega x + phi) + c in harmonic_space(H); omega must be an integer <= H.
inline std::vector<double> harmonic_coefficients(const TaskPoint& f, std::size_t harmonics) {
  const double w = f.coord(1);
  const auto k = static_cast<std::size_t>(std::llround(w));
  if (std::abs(w - static_cast<double>(k)) > 1e-12 || k < 1 || k > harmonics)
    throw ModelError("sinusoid frequency is not in the harmonic basis");
  std::vector<double> theta(1 + 2 * harmonics, 0.0);
  theta[0] = f.coord(3);
  theta[2 * k - 1] = f.coord(0) * std::cos(f.coord(2));
  theta[2 * k] = f.coord(0) * std::sin(f.coord(2));
  return theta;
}

inline std::vector<TrialRow> run_sinusoid_trial(const ExperimentConfig& cfg, std::size_t trial) {
  const std::uint64_t seed = derive_seed(cfg.seed, trial);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> freq(1, cfg.harmonics);
  std::uniform_real_distribution<double> phase(-kPi, kPi), amp(0.5, 2.0), off(-1.0, 1.0), shift(-2.0, 2.0),
      stretch(0.5, 2.0);
  const double omega = static_cast<double>(freq(rng));
  const double phi = phase(rng);
  const double A = amp(rng);
  const double c = off(rng);
  const TaskPoint base = sinusoid(A, omega, phi, c);

  auto draw_params = [&]() -> std::vector<double> {
    const double a = shift(rng);
    if (cfg.group.kind == GroupKind::Translation) return {a};
    const double b = stretch(rng);
    return {a, b};
  };
  std::vector<std::vector<double>> params;
  for (std::size_t k = 0; k < cfg.k_source; ++k) params.push_back(draw_params());
  const auto sources = orbit_grid(base, cfg.group, params);
  const TaskPoint target = act_on_task(GroupElement(cfg.group, draw_params()), base);

  std::vector<Dataset> source_data;
  for (std::size_t k = 0; k < sources.size(); ++k)
    source_data.push_back(sample_dataset(sources[k], cfg.n_per_task, cfg.noise_sigma, derive_seed(seed, 100 + k)));
  const Dataset target_data = sample_dataset(target, cfg.n_per_task, cfg.noise_sigma, derive_seed(seed, 99));

  const auto& dom = scalar_domain(target.family());
  const auto xs = uniform_grid(dom.lo, dom.hi, cfg.eval_grid);
  std::vector<double> truth;
  for (double x : xs) truth.push_back(evaluate(target, x));

  const auto full = harmonic_space(cfg.harmonics);
  const std::size_t d = full.dim();
  std::vector<std::size_t> nonconst;
  for (std::size_t j = 1; j < d; ++j) nonconst.push_back(j);

  LearnerConfig exact;
  exact.method = FitMethod::ClosedFormLSQ;
  exact.max_iters = 1000;
  exact.tol = 1e-13;
  exact.seed = seed;
  const LearnerConfig budget = budget_config(cfg, seed);
  const std::size_t n_train = target_data.size();

  // Leaf spaces: for Translation the shared block is every non-constant coefficient; for
  // Affine the learned shape is rectified into a basis function.
  auto leaf_space_for = [&](std::span<const double> shape_theta) {
    if (cfg.group.kind == GroupKind::Translation) return repartition(full, nonconst);
    return rectify_along(full, shape_theta);
  };
  auto frozen_for = [&](const ModelSpace<double>& leaf_space, std::span<const double> shape_theta) {
    if (cfg.group.kind == GroupKind::Translation) {
      std::vector<double> frozen;
      for (auto j : leaf_space.inv_idx) frozen.push_back(shape_theta[j]);
      return frozen;
    }
    return std::vector<double>(leaf_space.inv_dim(), 0.0);
  };

  std::vector<TrialRow> rows;
  for (Strategy s : cfg.strategies) {
    switch (s) {
      case Strategy::Scratch: {
        const auto fit = fit_scratch<double>(target_data, full, budget);
        rows.push_back(make_row<double>(s, trial, seed, fit, test_mse<double>(full, fit.theta, xs, truth), d, cfg, n_train));
        break;
      }
      case Strategy::LeafConstrained:
      case Strategy::GroundTruthLeaf: {
        std::vector<double> shape;
        if (s == Strategy::GroundTruthLeaf) {
          shape = harmonic_coefficients(base, cfg.harmonics);
        } else if (cfg.group.kind == GroupKind::Translation) {
          const auto mt = fit_multitask<double, Dataset>(source_data, repartition(full, nonconst), exact);
          shape = mt.theta(repartition(full, nonconst), 0);
        } else {
          shape = fit_multitask_on_orbit<double, Dataset>(source_data, full, exact).shape;
        }
        shape[0] = 0.0;
        const auto leaf_space = leaf_space_for(shape);
        const auto frozen = frozen_for(leaf_space, shape);
        const auto fit = fit_on_leaf<double>(target_data, leaf_space, frozen, budget);
        rows.push_back(make_row<double>(s, trial, seed, fit, test_mse<double>(leaf_space, fit.theta, xs, truth),
                                        leaf_space.leaf_dim(), cfg, n_train));
        break;
      }
      case Strategy::SimilarityWarmStart: {
        const std::size_t nearest = voronoi_assign(target, sources);
        LearnerConfig warm = budget;
        warm.initial_theta = fit_scratch<double>(source_data[nearest], full, exact).theta;
        const auto fit = fit_scratch<double>(target_data, full, warm);
        rows.push_back(make_row<double>(s, trial, seed, fit, test_mse<double>(full, fit.theta, xs, truth), d, cfg, n_train));
        break;
      }
    }
  }
  return rows;
}

/// 5 x 5 grid over (mass, length); trial t holds out grid point t mod 25.
inline std::vector<PendulumParams> pendulum_grid() {
  std::vector<PendulumParams> grid;
  for (double m : {0.5, 0.75, 1.0, 1.25, 1.5})
    for (double l : {0.5, 0.75, 1.0, 1.25, 1.5}) grid.push_back(PendulumParams{m, l, 0.1, 9.81});
  return grid;
}

inline std::vector<TrialRow> run_pendulum_trial(const ExperimentConfig& cfg, std::size_t trial) {
  const std::uint64_t seed = derive_seed(cfg.seed, trial);
  std::mt19937_64 rng(seed);
  const auto grid = pendulum_grid();
  const std::size_t held_out = trial % grid.size();
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (i != held_out) pool.push_back(i);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(cfg.k_source);

  const StateBox box;
  auto make_data = [&](const PendulumParams& p, std::uint64_t s) {
    return with_noise(dynamics_dataset(p, cfg.n_per_task, box, s), cfg.noise_sigma, derive_seed(s, 1));
  };
  std::vector<PendulumDataset> source_data;
  for (std::size_t k = 0; k < pool.size(); ++k) source_data.push_back(make_data(grid[pool[k]], derive_seed(seed, 100 + k)));
  const PendulumParams target = grid[held_out];
  const auto target_data = make_data(target, derive_seed(seed, 99));

  std::vector<PendulumState> xs;
  std::vector<double> truth;
  const std::size_t side = static_cast<std::size_t>(std::max(2.0, std::round(std::sqrt(static_cast<double>(cfg.eval_grid)))));
  for (double th : uniform_grid(box.theta.lo, box.theta.hi, side))
    for (double om : uniform_grid(box.omega.lo, box.omega.hi, side)) {
      xs.push_back({th, om});
      truth.push_back(dynamics(target, xs.back()).omega);
    }

  const auto space = pendulum_model_space();
  LearnerConfig exact;
  exact.method = FitMethod::ClosedFormLSQ;
  exact.max_iters = 1000;
  exact.tol = 1e-13;
  const LearnerConfig budget = budget_config(cfg, seed);
  const std::size_t n_train = target_data.size();

  std::vector<TrialRow> rows;
  for (Strategy s : cfg.strategies) {
    switch (s) {
      case Strategy::Scratch: {
        const auto fit = fit_scratch<PendulumState>(target_data, space, budget);
        rows.push_back(make_row<PendulumState>(s, trial, seed, fit, test_mse<PendulumState>(space, fit.theta, xs, truth),
                                               space.dim(), cfg, n_train));
        break;
      }
      case Strategy::LeafConstrained:
      case Strategy::GroundTruthLeaf: {
        std::vector<double> frozen(space.inv_dim(), 0.0);
        if (s == Strategy::LeafConstrained)
          frozen = fit_multitask<PendulumState, PendulumDataset>(source_data, space, exact).shared_inv;
        const auto fit = fit_on_leaf<PendulumState>(target_data, space, frozen, budget);
        rows.push_back(make_row<PendulumState>(s, trial, seed, fit, test_mse<PendulumState>(space, fit.theta, xs, truth),
                                               space.leaf_dim(), cfg, n_train));
        break;
      }
      case Strategy::SimilarityWarmStart: {
        // Nearest source by RMS distance between the true acceleration fields on the grid.
        std::size_t nearest = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < pool.size(); ++k) {
          double acc = 0.0;
          for (std::size_t i = 0; i < xs.size(); ++i) {
            const double e = dynamics(grid[pool[k]], xs[i]).omega - truth[i];
            acc += e * e;
          }
          if (acc < best) {
            best = acc;
            nearest = k;
          }
        }
        LearnerConfig warm = budget;
        warm.initial_theta = fit_scratch<PendulumState>(source_data[nearest], space, exact).theta;
        const auto fit = fit_scratch<PendulumState>(target_data, space, warm);
        rows.push_back(make_row<PendulumState>(s, trial, seed, fit, test_mse<PendulumState>(space, fit.theta, xs, truth),
                                               space.dim(), cfg, n_train));
        break;
      }
    }
  }
  return rows;
}

}  // namespace detail

/// Runs cfg.trials independent trials (seeds derived from cfg.seed) on up to `jobs` threads;
/// rows are merged in trial order, so the report does not depend on `jobs`.
inline TransferReport run_transfer_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1) {
  cfg.validate();
  std::vector<std::vector<TrialRow>> per_trial(cfg.trials);
  auto run = [&](std::size_t t) {
    per_trial[t] = cfg.task_family == "pendulum" ? detail::run_pendulum_trial(cfg, t) : detail::run_sinusoid_trial(cfg, t);
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, cfg.trials));
  if (jobs == 1) {
    for (std::size_t t = 0; t < cfg.trials; ++t) run(t);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t w = 0; w < jobs; ++w)
      workers.emplace_back([&, w] {
        try {
          for (std::size_t t = w; t < cfg.trials; t += jobs) run(t);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& th : workers) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  TransferReport report;
  report.config = to_key_values(cfg);
  for (auto& rows : per_trial)
    for (auto& r : rows) report.rows.push_back(std::move(r));
  aggregate(report);
  return report;
}

// ---------------------------------------------------------------------------
// Equivariance suite

struct EquivarianceSuiteConfig {
  std::size_t cases = 100;  // per group family
  std::size_t n = 50;
  double tol = 1e-9;
  std::uint64_t seed = 1;
  /// Adds rows whose frequency lies outside the model basis.
  bool include_nonrepresentable = true;
};

inline const std::set<std::string>& equivariance_config_keys() {
  static const std::set<std::string> keys{"cases", "n", "tol", "seed", "include_nonrepresentable"};
  return keys;
}

inline KeyValues to_key_values(const EquivarianceSuiteConfig& c) {
  return {{"cases", std::to_string(c.cases)},
          {"n", std::to_string(c.n)},
          {"tol", format_shortest(c.tol)},
          {"seed", std::to_string(c.seed)},
          {"include_nonrepresentable", c.include_nonrepresentable ? "true" : "false"}};
}

inline EquivarianceSuiteConfig equivariance_config_from(const KeyValues& kv, EquivarianceSuiteConfig base = {}) {
  reject_unknown_keys(kv, equivariance_config_keys());
  for (const auto& [k, v] : kv) {
    if (k == "cases") base.cases = parse_count(k, v);
    else if (k == "n") base.n = parse_count(k, v);
    else if (k == "tol") base.tol = parse_real(k, v);
    else if (k == "seed") base.seed = parse_count(k, v);
    else if (k == "include_nonrepresentable") base.include_nonrepresentable = parse_bool(k, v);
  }
  if (base.n < 3) throw ConfigError("n must be >= 3");
  if (!(base.tol > 0.0)) throw ConfigError("tol must be positive");
  return base;
}

struct EquivarianceRow {
  std::string group;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<double> task;
  std::vector<double> element;
  double param_gap = 0.0;
  bool representable = true;
  bool identity = false;
  bool pass = false;
  bool operator==(const EquivarianceRow&) const = default;
};

struct EquivarianceSuiteReport {
  KeyValues config;
  std::vector<EquivarianceRow> rows;
  double pass_rate = 0.0;       // over representable rows
  double max_param_gap = 0.0;   // over representable rows
  std::size_t counted = 0;
  bool operator==(const EquivarianceSuiteReport&) const = default;
};

inline void to_json(nlohmann::json& j, const EquivarianceRow& r) {
  j = nlohmann::json{{"group", r.group},         {"index", r.index},
                     {"seed", r.seed},           {"task", r.task},
                     {"element", r.element},     {"param_gap", r.param_gap},
                     {"representable", r.representable}, {"identity", r.identity},
                     {"pass", r.pass}};
}

inline void from_json(const nlohmann::json& j, EquivarianceRow& r) {
  j.at("group").get_to(r.group);
  j.at("index").get_to(r.index);
  j.at("seed").get_to(r.seed);
  j.at("task").get_to(r.task);
  j.at("element").get_to(r.element);
  j.at("param_gap").get_to(r.param_gap);
  j.at("representable").get_to(r.representable);
  j.at("identity").get_to(r.identity);
  j.at("pass").get_to(r.pass);
}

inline void to_json(nlohmann::json& j, const EquivarianceSuiteReport& r) {
  j = nlohmann::json{{"kind", "equivariance"}, {"config", r.config},   {"rows", r.rows},
                     {"pass_rate", r.pass_rate}, {"max_param_gap", r.max_param_gap}, {"counted", r.counted}};
}

inline void from_json(const nlohmann::json& j, EquivarianceSuiteReport& r) {
  if (j.value("kind", std::string{}) != "equivariance") throw std::invalid_argument("not an equivariance report");
  j.at("config").get_to(r.config);
  j.at("rows").get_to(r.rows);
  j.at("pass_rate").get_to(r.pass_rate);
  j.at("max_param_gap").get_to(r.max_param_gap);
  j.at("counted").get_to(r.counted);
}

/// check_equivariance over seeded sinusoid tasks for Translation and Affine with the
/// closed-form learner on {1, sin x, cos x}. Rows per group: one identity element, `cases`
/// random representable cases (frequency 1), and optionally `cases / 10` rows with
/// frequency 2.5, which are reported but not counted.
inline EquivarianceSuiteReport run_equivariance_suite(const EquivarianceSuiteConfig& cfg) {
  EquivarianceSuiteReport report;
  report.config = to_key_values(cfg);
  const auto space = harmonic_space(1);
  std::size_t counted = 0, passed = 0;
  double max_gap = 0.0;
  std::size_t stream = 0;
  for (GroupFamily family : {GroupFamily::translation(), GroupFamily::affine()}) {
    const auto action = parameter_action(family, space);
    const std::size_t extra = cfg.include_nonrepresentable ? std::max<std::size_t>(1, cfg.cases / 10) : 0;
    for (std::size_t i = 0; i < 1 + cfg.cases + extra; ++i) {
      const std::uint64_t seed = derive_seed(cfg.seed, stream++);
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> amp(0.2, 3.0), phase(-kPi, kPi), off(-3.0, 3.0);
      const bool is_identity = i == 0;
      const bool representable = i <= cfg.cases;
      const double omega = representable ? 1.0 : 2.5;
      const TaskPoint f = sinusoid(amp(rng), omega, phase(rng), off(rng));
      const GroupElement g = is_identity ? identity(family) : sample_element(family, rng);
      LearnerConfig lc;
      lc.method = FitMethod::ClosedFormLSQ;
      lc.seed = seed;
      const auto r = check_equivariance(space, action, f, g, lc, cfg.n, cfg.tol);
      EquivarianceRow row;
      row.group = std::string(to_string(family.kind));
      row.index = i;
      row.seed = seed;
      row.task.assign(f.coords().begin(), f.coords().end());
      row.element.assign(g.params().begin(), g.params().end());
      row.param_gap = r.param_gap;
      row.representable = r.representable;
      row.identity = is_identity;
      row.pass = r.pass;
      if (row.representable) {
        ++counted;
        if (row.pass) ++passed;
        max_gap = std::max(max_gap, row.param_gap);
      }
      report.rows.push_back(std::move(row));
    }
  }
  report.counted = counted;
  report.pass_rate = counted ? static_cast<double>(passed) / static_cast<double>(counted) : 0.0;
  report.max_param_gap = max_gap;
  return report;
}

}  // namespace foliate
