// foliate: command-line front end for the orbit, relatedness, foliation, equivariance,
// transfer and pendulum tools. Every subcommand resolves its configuration as
// defaults < --config file < --set overrides < dedicated flags, prints it, and writes
// resolved-config.txt, report.json and report.csv under the output directory.
//
// Exit codes: 0 success, 1 failed check or runtime failure, 2 usage or config error.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "foliate/config.hpp"
#include "foliate/foliation.hpp"
#include "foliate/group.hpp"
#include "foliate/harness.hpp"
#include "foliate/learning.hpp"
#include "foliate/numeric.hpp"
#include "foliate/pendulum.hpp"
#include "foliate/relate.hpp"
#include "foliate/report.hpp"
#include "foliate/task_space.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace foliate;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

struct KeySpec {
  std::string key;
  std::string default_value;
  std::string help;
};

struct RunContext {
  KeyValues cfg;
  fs::path out;
  std::size_t jobs = 1;
};

struct Command {
  std::string name;
  std::string description;
  std::vector<KeySpec> keys;
  std::function<int(const RunContext&)> run;
};

std::string flag_name(const std::string& key) {
  std::string out = key;
  for (char& c : out)
    if (c == '_') c = '-';
  return "--" + out;
}

/// %.6g, with ".0" appended to integral values so they read as reals.
std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
  return out + "\n";
}

std::string join(std::span<const double> v, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + short_number(v[i]);
  return out;
}

void write_outputs(const fs::path& dir, const KeyValues& cfg, const json& report, const std::string& csv) {
  fs::create_directories(dir);
  write_text_file(dir / "resolved-config.txt", format_key_values(cfg));
  write_text_file(dir / "report.json", report_json(report));
  write_text_file(dir / "report.csv", csv);
}

GroupFamily group_from(const KeyValues& cfg, const std::string& key) {
  try {
    return GroupFamily{group_kind_from_string(cfg.at(key))};
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::vector<double> list_from(const KeyValues& cfg, const std::string& key) {
  try {
    return parse_double_list(cfg.at(key));
  } catch (const std::invalid_argument&) {
    throw ConfigError(key + ": expected a comma-separated list of numbers, got '" + cfg.at(key) + "'");
  }
}

TaskPoint task_from(const KeyValues& cfg, const std::string& key) {
  const auto coords = list_from(cfg, key);
  const auto& family = cfg.at("task_family");
  if (family == "sinusoid") return TaskPoint(sinusoid_family(), coords);
  if (family == "poly") {
    if (coords.empty()) throw ConfigError(key + ": polynomial needs at least one coefficient");
    return TaskPoint(poly_basis_family(coords.size()), coords);
  }
  throw ConfigError("task_family must be 'sinusoid' or 'poly', got '" + family + "'");
}

// ---------------------------------------------------------------------------
// orbit

int run_orbit(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const GroupFamily group = group_from(cfg, "family");
  if (group.kind == GroupKind::Rotation2D) throw ConfigError("family: rotation2d does not act on tasks");
  const TaskPoint f = task_from(cfg, "task");
  const std::size_t count = parse_count("count", cfg.at("count"));
  const std::uint64_t seed = parse_count("seed", cfg.at("seed"));

  std::mt19937_64 rng(seed);
  std::vector<GroupElement> elements{identity(group)};
  for (std::size_t i = 0; i < count; ++i) elements.push_back(sample_element(group, rng));

  json points = json::array();
  std::string header = "index";
  for (std::size_t k = 0; k < group.param_dim(); ++k) header += k == 0 ? ",a" : ",b";
  for (std::size_t k = 0; k < f.family().coord_dim; ++k) header += ",c" + std::to_string(k);
  std::string csv = header + ",distance,related\n";
  bool all_related = true;
  double max_distance = 0.0;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const auto g = act_on_task(elements[i], f);
    const double dist = task_distance(f, g);
    const bool related = solve_relating(f, g, group).related();
    all_related = all_related && related;
    max_distance = std::max(max_distance, dist);
    const auto params = elements[i].params();
    points.push_back({{"index", i},
                      {"element", std::vector<double>(params.begin(), params.end())},
                      {"coords", std::vector<double>(g.coords().begin(), g.coords().end())},
                      {"distance", dist},
                      {"related", related}});
    std::vector<std::string> cells{std::to_string(i)};
    for (double p : params) cells.push_back(format_double(p));
    for (double c : g.coords()) cells.push_back(format_double(c));
    cells.push_back(format_double(dist));
    cells.push_back(related ? "true" : "false");
    csv += csv_row(cells);
  }
  const json report{{"kind", "orbit"},
                    {"config", cfg},
                    {"task", std::vector<double>(f.coords().begin(), f.coords().end())},
                    {"group", std::string(to_string(group.kind))},
                    {"points", points},
                    {"all_related", all_related}};
  write_outputs(ctx.out, cfg, report, csv);
  std::cout << "wrote " << ctx.out.string() << "\n";
  std::cout << "orbit: " << elements.size() << " points of " << f.family().name << " (" << join(f.coords())
            << ") under " << to_string(group.kind) << ", max distance " << short_number(max_distance)
            << (all_related ? ", all related" : ", NOT all related") << "\n";
  return all_related ? kExitOk : kExitFailed;
}

// ---------------------------------------------------------------------------
// relate

int run_relate(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const GroupFamily group = group_from(cfg, "family");
  if (group.kind == GroupKind::Rotation2D) throw ConfigError("family: rotation2d does not act on tasks");
  const TaskPoint f = task_from(cfg, "source");
  const TaskPoint g = task_from(cfg, "target");
  const std::size_t grid_n = parse_count("grid_n", cfg.at("grid_n"));
  const double tol = parse_real("tol", cfg.at("tol"));
  if (grid_n < group.param_dim() + 1) throw ConfigError("grid_n must be at least " + std::to_string(group.param_dim() + 1));
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");

  const auto& dom = scalar_domain(f.family());
  const auto grid = uniform_grid(dom.lo, dom.hi, grid_n);
  const auto r = solve_relating(f, g, group, grid, tol);

  json element = nullptr;
  std::string summary;
  std::string a_cell, b_cell;
  if (r.related()) {
    const auto& e = *r.element;
    element = json{{"family", std::string(to_string(group.kind))},
                   {"params", std::vector<double>(e.params().begin(), e.params().end())}};
    summary = "related: a=" + short_number(e.offset());
    a_cell = format_double(e.offset());
    if (group.kind == GroupKind::Affine) {
      summary += ", b=" + short_number(e.scale());
      b_cell = format_double(e.scale());
    }
  } else if (r.degenerate) {
    summary = "not related: source is constant, the " + std::string(to_string(group.kind)) + " action is degenerate";
  } else {
    summary = "not related: max residual " + short_number(r.max_residual) + " > tol " + short_number(tol);
  }
  const json report{{"kind", "relate"},
                    {"config", cfg},
                    {"related", r.related()},
                    {"element", element},
                    {"degenerate", r.degenerate},
                    {"max_residual", std::isnan(r.max_residual) ? json(nullptr) : json(r.max_residual)}};
  std::string csv = "related,family,a,b,max_residual,degenerate\n";
  csv += csv_row({r.related() ? "true" : "false", std::string(to_string(group.kind)), a_cell, b_cell,
                  std::isnan(r.max_residual) ? "" : format_double(r.max_residual), r.degenerate ? "true" : "false"});
  write_outputs(ctx.out, cfg, report, csv);
  std::cout << "wrote " << ctx.out.string() << "\n";
  std::cout << summary << "\n";
  return r.related() ? kExitOk : kExitFailed;
}

// ---------------------------------------------------------------------------
// check-foliation

Atlas atlas_from(const std::string& name, std::size_t dim) {
  if (name == "polar") return polar_atlas();
  if (name == "polar-defect") return planted_defect_atlas();
  if (name == "sinusoid-translation") return orbit_foliation(GroupFamily::translation(), *sinusoid_family());
  if (name == "sinusoid-affine") return orbit_foliation(GroupFamily::affine(), *sinusoid_family());
  if (name == "poly-translation") return orbit_foliation(GroupFamily::translation(), *poly_basis_family(dim));
  if (name == "poly-affine") {
    if (dim < 2) throw ConfigError("dim must be >= 2 for poly-affine");
    return orbit_foliation(GroupFamily::affine(), *poly_basis_family(dim));
  }
  throw ConfigError("unknown atlas '" + name +
                    "' (polar, polar-defect, sinusoid-translation, sinusoid-affine, poly-translation, poly-affine)");
}

std::string check_csv(std::span<const CheckReport> checks) {
  std::string csv = "check,pass,max_violation,samples,tol,seed,flag\n";
  for (const auto& c : checks)
    csv += csv_row({c.check, c.pass ? "true" : "false", format_double(c.max_violation), std::to_string(c.samples),
                    format_double(c.tol), std::to_string(c.seed), c.flag});
  return csv;
}

int run_check_foliation(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const std::size_t dim = parse_count("dim", cfg.at("dim"));
  if (dim < 1) throw ConfigError("dim must be >= 1");
  const Atlas atlas = atlas_from(cfg.at("atlas"), dim);
  const std::size_t samples = parse_count("samples", cfg.at("samples"));
  const double step = parse_real("step", cfg.at("step"));
  const double tol = parse_real("tol", cfg.at("tol"));
  const std::uint64_t seed = parse_count("seed", cfg.at("seed"));
  if (samples < 1) throw ConfigError("samples must be >= 1");
  if (!(step > 0.0) || !(tol > 0.0)) throw ConfigError("step and tol must be positive");

  // A single-chart atlas has only its identity self-transition.
  const auto checks = atlas.charts.size() == 1
                          ? std::vector<CheckReport>{check_foliated_transition(atlas.charts[0], atlas.charts[0], samples,
                                                                               step, tol, seed)}
                          : check_atlas(atlas, samples, step, tol, seed);
  const int k = invariant_count(static_cast<int>(atlas.d), static_cast<int>(atlas.n));
  const bool count_ok = static_cast<std::size_t>(k) == atlas.m;
  bool pass = count_ok;
  double worst = 0.0;
  for (const auto& c : checks) {
    pass = pass && c.pass;
    worst = std::max(worst, c.max_violation);
  }
  const json report{{"kind", "foliation-check"},
                    {"config", cfg},
                    {"atlas", atlas.name},
                    {"d", atlas.d},
                    {"m", atlas.m},
                    {"n", atlas.n},
                    {"invariant_count", k},
                    {"checks", checks},
                    {"max_violation", worst},
                    {"pass", pass}};
  write_outputs(ctx.out, cfg, report, check_csv(checks));
  for (const auto& c : checks)
    std::cout << "  " << c.check << ": " << (c.pass ? "pass" : "FAIL") << " max_violation="
              << short_number(c.max_violation) << " samples=" << c.samples << (c.flag.empty() ? "" : " flag=" + c.flag)
              << "\n";
  std::cout << "wrote " << ctx.out.string() << "\n";
  std::cout << "check-foliation " << atlas.name << ": " << (pass ? "PASS" : "FAIL") << " (" << checks.size()
            << " transitions, max_violation=" << short_number(worst) << ", m=" << atlas.m << ", n=" << atlas.n << ")\n";
  return pass ? kExitOk : kExitFailed;
}

// ---------------------------------------------------------------------------
// check-invariance

int run_check_invariance(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& name = cfg.at("quantity");
  const GroupFamily group = group_from(cfg, "family");
  InvariantQuantity q;
  if (name == "radius" || name == "first-coordinate") {
    if (group.kind != GroupKind::Rotation2D) throw ConfigError(name + " is defined on the plane; use --family rotation2d");
    q = name == "radius" ? radius_quantity() : first_coordinate_quantity();
  } else if (name == "sinusoid-shape") {
    if (group.kind == GroupKind::Rotation2D) throw ConfigError("sinusoid-shape needs --family translation or affine");
    q = sinusoid_shape_quantity();
  } else {
    throw ConfigError("unknown quantity '" + name + "' (radius, first-coordinate, sinusoid-shape)");
  }
  ElementSampling sampling;
  if (cfg.at("sampling") == "identity-component") sampling = ElementSampling::IdentityComponent;
  else if (cfg.at("sampling") == "full") sampling = ElementSampling::Full;
  else throw ConfigError("sampling must be 'identity-component' or 'full'");
  const std::size_t samples = parse_count("samples", cfg.at("samples"));
  const double tol = parse_real("tol", cfg.at("tol"));
  const std::uint64_t seed = parse_count("seed", cfg.at("seed"));
  if (samples < 1) throw ConfigError("samples must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");

  const auto r = check_invariance(q, group, samples, tol, seed, sampling);
  const json report{{"kind", "invariance-check"}, {"config", cfg}, {"check", r}, {"pass", r.pass}};
  write_outputs(ctx.out, cfg, report, check_csv(std::span<const CheckReport>(&r, 1)));
  std::cout << "wrote " << ctx.out.string() << "\n";
  std::cout << "check-invariance " << q.name << " under " << to_string(group.kind) << ": " << (r.pass ? "PASS" : "FAIL")
            << " (max_violation=" << short_number(r.max_violation) << " over " << r.samples << " samples)\n";
  return r.pass ? kExitOk : kExitFailed;
}

// ---------------------------------------------------------------------------
// check-equivariance

int run_check_equivariance(const RunContext& ctx) {
  const auto cfg = equivariance_config_from(ctx.cfg);
  const auto r = run_equivariance_suite(cfg);
  fs::create_directories(ctx.out);
  write_text_file(ctx.out / "resolved-config.txt", format_key_values(ctx.cfg));
  emit_report(r, ReportFormat::Json, ctx.out);
  emit_report(r, ReportFormat::Csv, ctx.out);
  const bool pass = r.pass_rate == 1.0;
  std::cout << "wrote " << ctx.out.string() << "\n";
  std::cout << "check-equivariance: " << (pass ? "PASS" : "FAIL") << " pass_rate=" << short_number(r.pass_rate)
            << " over " << r.counted << " representable cases, max param_gap=" << short_number(r.max_param_gap) << " ("
            << r.rows.size() - r.counted << " non-representable rows excluded)\n";
  return pass ? kExitOk : kExitFailed;
}

// ---------------------------------------------------------------------------
// transfer

int run_transfer(const RunContext& ctx) {
  const auto cfg = experiment_config_from(ctx.cfg);
  const auto r = run_transfer_experiment(cfg, ctx.jobs);
  fs::create_directories(ctx.out);
  write_text_file(ctx.out / "resolved-config.txt", format_key_values(ctx.cfg));
  for (auto f : {ReportFormat::Json, ReportFormat::Csv, ReportFormat::Svg}) emit_report(r, f, ctx.out);
  for (const auto& s : r.summaries)
    std::cout << "  " << s.strategy << ": median final_loss=" << short_number(s.median_final_loss)
              << " median train_loss=" << short_number(s.median_train_loss) << " reached_tol=" << s.reached_tol << "/"
              << s.trials << "\n";
  std::cout << "wrote " << ctx.out.string() << "\n";
  std::cout << "transfer " << cfg.task_family << "/" << to_string(cfg.group.kind) << ": " << cfg.trials << " trials, win_rate="
            << (r.win_rate ? short_number(*r.win_rate) : std::string("n/a"))
            << ", budget_fair=" << (r.budget_fair ? "true" : "false")
            << ", leaf_smaller_every_trial=" << (r.leaf_smaller_every_trial ? "true" : "false") << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pendulum-sim

int run_pendulum_sim(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  PendulumParams p{parse_real("mass", cfg.at("mass")), parse_real("length", cfg.at("length")),
                   parse_real("damping", cfg.at("damping")), parse_real("gravity", cfg.at("gravity"))};
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const PendulumState s0{parse_real("theta0", cfg.at("theta0")), parse_real("omega0", cfg.at("omega0"))};
  const double dt = parse_real("dt", cfg.at("dt"));
  const std::size_t steps = parse_count("steps", cfg.at("steps"));
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");

  const auto traj = simulate(p, s0, dt, steps);
  const double e0 = pendulum_energy(p, s0);
  double drift = 0.0;
  for (const auto& s : traj.states) drift = std::max(drift, std::abs(pendulum_energy(p, s) - e0));
  const double period = estimate_period(traj);
  const double linear_period = 2.0 * kPi * std::sqrt(p.length / p.gravity);
  const json report{{"kind", "pendulum-sim"},
                    {"config", cfg},
                    {"integrator", traj.integrator},
                    {"steps", steps},
                    {"energy_initial", e0},
                    {"energy_final", pendulum_energy(p, traj.states.back())},
                    {"max_energy_drift", drift},
                    {"period", std::isnan(period) ? json(nullptr) : json(period)},
                    {"small_angle_period", linear_period},
                    {"final_state", {traj.states.back().theta, traj.states.back().omega}}};
  std::ostringstream csv;
  write_trajectory_csv(csv, traj);
  write_outputs(ctx.out, cfg, report, csv.str());
  std::cout << "wrote " << ctx.out.string() << "\n";
  std::cout << "pendulum-sim: " << steps << " RK4 steps of dt=" << short_number(dt)
            << ", period=" << (std::isnan(period) ? std::string("n/a") : short_number(period))
            << " (small-angle " << short_number(linear_period) << "), max energy drift=" << short_number(drift) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

int run_report(const RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& input = cfg.at("input");
  if (input.empty()) throw ConfigError("input: path to a report.json is required");
  const auto& format = cfg.at("format");
  if (format != "all" && format != "json" && format != "csv" && format != "svg")
    throw ConfigError("format must be all, json, csv or svg");
  json j;
  try {
    j = json::parse(read_text_file(input));
  } catch (const json::exception& e) {
    throw ConfigError("input: not a JSON report (" + std::string(e.what()) + ")");
  } catch (const std::runtime_error& e) {
    throw ConfigError(std::string("input: ") + e.what());
  }
  const std::string kind = j.value("kind", std::string{});
  std::vector<ReportFormat> formats;
  if (format == "all" || format == "json") formats.push_back(ReportFormat::Json);
  if (format == "all" || format == "csv") formats.push_back(ReportFormat::Csv);
  if (format == "all" || format == "svg") formats.push_back(ReportFormat::Svg);

  fs::create_directories(ctx.out);
  write_text_file(ctx.out / "resolved-config.txt", format_key_values(cfg));
  std::vector<std::string> written;
  if (kind == "transfer") {
    const auto r = j.get<TransferReport>();
    for (auto f : formats) written.push_back(emit_report(r, f, ctx.out).filename().string());
  } else if (kind == "equivariance") {
    const auto r = j.get<EquivarianceSuiteReport>();
    for (auto f : formats)
      if (f != ReportFormat::Svg) written.push_back(emit_report(r, f, ctx.out).filename().string());
  } else {
    throw ConfigError("input: cannot regenerate a report of kind '" + kind + "' (transfer or equivariance)");
  }
  std::cout << "wrote " << ctx.out.string() << "\n";
  std::string files;
  for (const auto& w : written) files += (files.empty() ? "" : ", ") + w;
  std::cout << "report: regenerated " << kind << " report (" << files << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Command table

std::string experiment_help(const std::string& key) {
  static const std::map<std::string, std::string> help{
      {"task_family", "sinusoid or pendulum"},
      {"group", "output group relating the tasks: translation or affine"},
      {"k_source", "number of source tasks"},
      {"n_per_task", "training samples per task"},
      {"noise_sigma", "Gaussian target noise"},
      {"budget_iters", "gradient-descent iteration budget per strategy"},
      {"trials", "number of independent trials"},
      {"seed", "root seed; per-trial seeds are derived from it"},
      {"strategies", "comma list of Scratch, LeafConstrained, SimilarityWarmStart, GroundTruthLeaf"},
      {"gd_step", "initial gradient-descent step"},
      {"gd_tol", "gradient sup-norm counted as converged"},
      {"harmonics", "sinusoid model space {1, sin kx, cos kx : k <= harmonics}"},
      {"eval_grid", "points in the noise-free evaluation grid"},
      {"cases", "random representable cases per group"},
      {"n", "samples per fitted task"},
      {"tol", "parameter-gap tolerance"},
      {"include_nonrepresentable", "add reported-only rows with frequency 2.5"},
  };
  return help.at(key);
}

std::vector<KeySpec> specs_from(const KeyValues& defaults) {
  std::vector<KeySpec> out;
  for (const auto& [k, v] : defaults) out.push_back({k, v, experiment_help(k)});
  return out;
}

std::vector<Command> commands() {
  return {
      {"orbit",
       "Sample the orbit of a task under an output group",
       {{"family", "affine", "group acting on the task: translation or affine"},
        {"task_family", "sinusoid", "sinusoid (A,omega,phi,c) or poly (c0,c1,...)"},
        {"task", "1,1,0,0", "task coordinates, comma separated"},
        {"count", "5", "random group elements in addition to the identity"},
        {"seed", "1", "seed for the group elements"}},
       run_orbit},
      {"relate",
       "Find the group element relating two tasks",
       {{"family", "translation", "group: translation or affine"},
        {"task_family", "sinusoid", "sinusoid (A,omega,phi,c) or poly (c0,c1,...)"},
        {"source", "1,1,0,0", "coordinates of f"},
        {"target", "1,1,0,2", "coordinates of g"},
        {"grid_n", "101", "evaluation grid size"},
        {"tol", "1e-06", "max residual accepted as related"},
        {"seed", "1", "recorded seed (the solver is deterministic)"}},
       run_relate},
      {"check-foliation",
       "Finite-difference check of the foliated transition condition of an atlas",
       {{"atlas", "polar", "polar, polar-defect, sinusoid-translation, sinusoid-affine, poly-translation, poly-affine"},
        {"dim", "4", "coefficient count for the poly atlases"},
        {"samples", "200", "overlap samples per chart pair"},
        {"step", "1e-05", "central-difference step"},
        {"tol", "1e-06", "largest accepted |d x'/d y|"},
        {"seed", "1", "sampling seed"}},
       run_check_foliation},
      {"check-invariance",
       "Sampled check that a quantity is constant along group orbits",
       {{"quantity", "radius", "radius, first-coordinate (plane) or sinusoid-shape (task coordinates)"},
        {"family", "rotation2d", "group: rotation2d, translation or affine"},
        {"sampling", "identity-component", "identity-component or full (allows negative affine scales)"},
        {"samples", "1000", "random (point, element) pairs"},
        {"tol", "1e-09", "largest accepted change"},
        {"seed", "1", "sampling seed"}},
       run_check_invariance},
      {"check-equivariance",
       "Least-squares equivariance suite for translation and affine",
       specs_from(to_key_values(EquivarianceSuiteConfig{})),
       run_check_equivariance},
      {"transfer",
       "Leaf-constrained transfer versus scratch and warm-start baselines",
       specs_from(to_key_values(ExperimentConfig{})),
       run_transfer},
      {"pendulum-sim",
       "Integrate a damped pendulum with RK4",
       {{"mass", "1", "bob mass"},
        {"length", "1", "rod length"},
        {"damping", "0.1", "damping coefficient"},
        {"gravity", "9.81", "gravitational acceleration"},
        {"theta0", "0.5", "initial angle (rad)"},
        {"omega0", "0", "initial angular velocity (rad/s)"},
        {"dt", "0.001", "time step"},
        {"steps", "10000", "number of steps"},
        {"seed", "1", "recorded seed (the integrator is deterministic)"}},
       run_pendulum_sim},
      {"report",
       "Regenerate report files from a transfer or equivariance report.json",
       {{"input", "", "path to report.json"},
        {"format", "all", "all, json, csv or svg"},
        {"seed", "1", "recorded seed"}},
       run_report},
  };
}

struct Invocation {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  std::size_t jobs = 1;
  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::Option*> flag_options;
};

KeyValues resolve(const Command& cmd, const Invocation& inv) {
  KeyValues cfg;
  std::set<std::string> known;
  for (const auto& k : cmd.keys) {
    cfg[k.key] = k.default_value;
    known.insert(k.key);
  }
  auto apply = [&](const KeyValues& kv) {
    reject_unknown_keys(kv, known);
    for (const auto& [k, v] : kv) cfg[k] = v;
  };
  if (!inv.config_path.empty()) {
    std::string text;
    try {
      text = read_text_file(inv.config_path);
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }
    apply(parse_key_values(text));
  }
  KeyValues sets;
  for (const auto& s : inv.sets) {
    auto [k, v] = parse_assignment(s);
    sets[k] = v;
  }
  apply(sets);
  for (const auto& [key, opt] : inv.flag_options)
    if (opt->count() > 0) cfg[key] = inv.flags.at(key);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Orbits, foliations and leaf-constrained transfer for task families", "foliate"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  const auto table = commands();
  std::vector<Invocation> invocations(table.size());
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& cmd = table[i];
    auto& inv = invocations[i];
    auto* sub = app.add_subcommand(cmd.name, cmd.description);
    sub->add_option("--config", inv.config_path, "key = value config file")->type_name("FILE");
    sub->add_option("--set", inv.sets, "override one config key (repeatable)")->type_name("KEY=VALUE");
    sub->add_option("--out", inv.out, "output directory (default ./out/" + cmd.name + "-<timestamp>)")->type_name("DIR");
    sub->add_option("--jobs", inv.jobs, "worker threads for independent trials")->check(CLI::PositiveNumber)->default_val(1);
    for (const auto& k : cmd.keys) {
      auto* opt = sub->add_option(flag_name(k.key), inv.flags[k.key],
                                  k.help + (k.default_value.empty() ? "" : " [" + k.default_value + "]"));
      opt->type_name("VALUE");
      inv.flag_options[k.key] = opt;
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    CLI::App* active = &app;
    for (auto* sub : subs)
      if (sub->parsed()) active = sub;
    std::cerr << active->help();
    return kExitUsage;
  }

  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    const auto& cmd = table[i];
    const auto& inv = invocations[i];
    RunContext ctx;
    try {
      ctx.cfg = resolve(cmd, inv);
      ctx.out = inv.out.empty() ? fs::path("out") / (cmd.name + "-" + timestamp()) : fs::path(inv.out);
      ctx.jobs = inv.jobs;
      std::cout << "foliate " << cmd.name << "\nresolved config:\n";
      for (const auto& [k, v] : ctx.cfg) std::cout << "  " << k << " = " << v << "\n";
      std::cout << "seed: " << ctx.cfg.at("seed") << "\n";
      std::cout.flush();
      return cmd.run(ctx);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const TaskError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const GroupError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitFailed;
    }
  }
  return kExitUsage;
}
