#pragma once

// Finite-dimensional task families, seeded datasets, the RMS task metric and the
// similarity / nearest-reference machinery built on it.

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "foliate/group.hpp"
#include "foliate/numeric.hpp"

namespace foliate {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  bool contains(double x) const { return x >= lo && x <= hi; }
  bool operator==(const Interval&) const = default;
};

using Coords = std::vector<double>;
using TaskEvaluator = std::function<double(std::span<const double> coords, std::span<const double> x)>;
/// Coordinate-level realization of a group action on a task family.
using ActionRule = std::function<Coords(const GroupElement&, std::span<const double> coords)>;

struct TaskFamily {
  std::string name;
  std::size_t coord_dim = 0;
  /// One interval per input dimension.
  std::vector<Interval> domain;
  TaskEvaluator evaluator;
  std::map<GroupKind, ActionRule> action_rules;
  /// Maps coordinates to their canonical representative; may be empty.
  std::function<void(Coords&)> canonicalize;

  std::size_t input_dim() const { return domain.size(); }
  bool has_action(GroupKind kind) const { return action_rules.count(kind) != 0; }

  bool same_as(const TaskFamily& other) const {
    return this == &other || (name == other.name && coord_dim == other.coord_dim && domain == other.domain);
  }
};

using TaskFamilyPtr = std::shared_ptr<const TaskFamily>;

class TaskError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TaskPoint {
 public:
  TaskPoint(TaskFamilyPtr family, Coords coords) : family_(std::move(family)), coords_(std::move(coords)) {
    if (!family_) throw TaskError("task point without a family");
    if (coords_.size() != family_->coord_dim)
      throw TaskError(family_->name + " task needs " + std::to_string(family_->coord_dim) +
                      " coordinates, got " + std::to_string(coords_.size()));
    for (double c : coords_)
      if (!std::isfinite(c)) throw TaskError("task coordinates must be finite");
    if (family_->canonicalize) family_->canonicalize(coords_);
  }

  const TaskFamily& family() const { return *family_; }
  const TaskFamilyPtr& family_ptr() const { return family_; }
  std::span<const double> coords() const { return coords_; }
  double coord(std::size_t i) const { return coords_.at(i); }

 private:
  TaskFamilyPtr family_;
  Coords coords_;
};

inline double evaluate(const TaskPoint& f, std::span<const double> x) {
  const auto& fam = f.family();
  if (x.size() != fam.input_dim())
    throw TaskError(fam.name + " expects " + std::to_string(fam.input_dim()) + "-dimensional inputs");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!fam.domain[i].contains(x[i]))
      throw TaskError("input " + format_double(x[i]) + " outside the domain of " + fam.name);
  return fam.evaluator(f.coords(), x);
}

inline double evaluate(const TaskPoint& f, double x) { return evaluate(f, std::span<const double>(&x, 1)); }

inline const Interval& scalar_domain(const TaskFamily& fam) {
  if (fam.input_dim() != 1) throw TaskError(fam.name + " does not have a scalar input domain");
  return fam.domain.front();
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double phi) {
  double w = std::remainder(phi, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

// ---------------------------------------------------------------------------
// Catalog families

/// A*sin(omega*x + phi) + c on [0, 2pi], coordinates (A, omega, phi, c), A >= 0.
inline TaskFamilyPtr make_sinusoid_family(Interval domain = {0.0, 2.0 * kPi}) {
  auto fam = std::make_shared<TaskFamily>();
  fam->name = "sinusoid";
  fam->coord_dim = 4;
  fam->domain = {domain};
  fam->evaluator = [](std::span<const double> c, std::span<const double> x) {
    return c[0] * std::sin(c[1] * x[0] + c[2]) + c[3];
  };
  fam->canonicalize = [](Coords& c) {
    if (c[0] < 0.0) {
      c[0] = -c[0];
      c[2] = wrap_angle(c[2] + kPi);
    }
  };
  fam->action_rules[GroupKind::Translation] = [](const GroupElement& g, std::span<const double> c) {
    return Coords{c[0], c[1], c[2], c[3] + g.offset()};
  };
  // b*(A sin(.) + c) + a; a negative b is absorbed into the phase by canonicalize.
  fam->action_rules[GroupKind::Affine] = [](const GroupElement& g, std::span<const double> c) {
    return Coords{g.scale() * c[0], c[1], c[2], g.scale() * c[3] + g.offset()};
  };
  return fam;
}

inline const TaskFamilyPtr& sinusoid_family() {
  static const TaskFamilyPtr fam = make_sinusoid_family();
  return fam;
}

/// sum_i c_i x^i on [-1, 1]; coordinates are the coord_dim coefficients c_0..c_{d-1}.
inline TaskFamilyPtr poly_basis_family(std::size_t coord_dim, Interval domain = {-1.0, 1.0}) {
  if (coord_dim == 0) throw TaskError("polynomial family needs at least one coefficient");
  auto fam = std::make_shared<TaskFamily>();
  fam->name = "poly" + std::to_string(coord_dim);
  fam->coord_dim = coord_dim;
  fam->domain = {domain};
  fam->evaluator = [](std::span<const double> c, std::span<const double> x) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x[0] + *it;
    return acc;
  };
  fam->action_rules[GroupKind::Translation] = [](const GroupElement& g, std::span<const double> c) {
    Coords out(c.begin(), c.end());
    out[0] += g.offset();
    return out;
  };
  fam->action_rules[GroupKind::Affine] = [](const GroupElement& g, std::span<const double> c) {
    Coords out(c.begin(), c.end());
    for (double& v : out) v *= g.scale();
    out[0] += g.offset();
    return out;
  };
  return fam;
}

inline TaskPoint sinusoid(double amplitude, double omega, double phase, double offset) {
  return TaskPoint(sinusoid_family(), {amplitude, omega, phase, offset});
}

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  std::vector<double> inputs;
  std::vector<double> targets;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return inputs.size(); }
  bool operator==(const Dataset&) const = default;
};

/// Inputs are drawn first, then the Gaussian noise, from one mt19937_64 stream. Tasks
/// sampled with the same (n, seed) on the same domain therefore share their inputs.
inline Dataset sample_dataset(const TaskPoint& f, std::size_t n, double noise_sigma, std::uint64_t seed) {
  if (n == 0) throw TaskError("sample_dataset: n must be at least 1");
  if (!(noise_sigma >= 0.0)) throw TaskError("sample_dataset: noise_sigma must be >= 0");
  const auto& dom = scalar_domain(f.family());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pick(dom.lo, dom.hi);
  Dataset d;
  d.noise_sigma = noise_sigma;
  d.seed = seed;
  d.inputs.resize(n);
  d.targets.resize(n);
  for (auto& x : d.inputs) x = pick(rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double clean = evaluate(f, d.inputs[i]);
    d.targets[i] = noise_sigma == 0.0 ? clean : clean + noise_sigma * noise(rng);
  }
  return d;
}

inline void write_dataset_csv(std::ostream& os, const Dataset& d) {
  os << "x,y\n";
  for (std::size_t i = 0; i < d.size(); ++i)
    os << format_double(d.inputs[i]) << ',' << format_double(d.targets[i]) << '\n';
}

inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || (line != "x,y" && line != "x,y\r"))
    throw TaskError("dataset csv must start with header 'x,y'");
  Dataset d;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw TaskError("malformed dataset row: " + line);
    d.inputs.push_back(parse_double(std::string_view(line).substr(0, comma)));
    d.targets.push_back(parse_double(std::string_view(line).substr(comma + 1)));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Metric, similarity, tessellation

inline constexpr std::size_t kDefaultDistanceGrid = 201;

/// Root-mean-square difference of the two tasks on a uniform grid of the domain.
inline double task_distance(const TaskPoint& f, const TaskPoint& g, std::size_t grid_n = kDefaultDistanceGrid) {
  if (!f.family().same_as(g.family()))
    throw TaskError("task_distance: family mismatch (" + f.family().name + " vs " + g.family().name + ")");
  if (grid_n == 0) throw TaskError("task_distance: empty grid");
  const auto& dom = scalar_domain(f.family());
  double acc = 0.0;
  for (double x : uniform_grid(dom.lo, dom.hi, grid_n)) {
    const double diff = evaluate(f, x) - evaluate(g, x);
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(grid_n));
}

inline bool similar(const TaskPoint& f, const TaskPoint& g, double epsilon,
                    std::size_t grid_n = kDefaultDistanceGrid) {
  if (!(epsilon > 0.0)) throw TaskError("similar: epsilon must be positive");
  return task_distance(f, g, grid_n) < epsilon;
}

/// Index of the nearest reference; ties go to the lowest index.
inline std::size_t voronoi_assign(const TaskPoint& f, std::span<const TaskPoint> references,
                                  std::size_t grid_n = kDefaultDistanceGrid) {
  if (references.empty()) throw TaskError("voronoi_assign: no references");
  std::size_t best = 0;
  double best_d = task_distance(f, references[0], grid_n);
  for (std::size_t i = 1; i < references.size(); ++i) {
    const double d = task_distance(f, references[i], grid_n);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace foliate
