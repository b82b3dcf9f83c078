#pragma once

// Charts, atlases, leaves and invariant quantities.
//
// A chart splits a point of R^d into a transverse part x (dimension m, constant along a
// leaf) and a leaf part y (dimension n). An atlas is foliated when every chart transition
// h = (h_m, h_n) has h_m independent of y; check_foliated_transition tests exactly that.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "foliate/group.hpp"
#include "foliate/numeric.hpp"
#include "foliate/relate.hpp"
#include "foliate/task_space.hpp"

namespace foliate {

class ChartError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct ChartCoords {
  std::vector<double> x;  // transverse, length m
  std::vector<double> y;  // along the leaf, length n

  bool operator==(const ChartCoords&) const = default;
};

struct Chart {
  std::string id;
  std::size_t m = 0;
  std::size_t n = 0;
  std::function<bool(std::span<const double>)> region;
  std::function<ChartCoords(std::span<const double>)> forward;
  std::function<std::vector<double>(const ChartCoords&)> backward;
  /// Draws a point inside the region; used by the sampled checks.
  std::function<std::vector<double>(std::mt19937_64&)> sample_region;

  std::size_t d() const { return m + n; }
  bool contains(std::span<const double> p) const { return p.size() == d() && region(p); }
};

struct Atlas {
  std::string name;
  std::size_t d = 0, m = 0, n = 0;
  std::vector<Chart> charts;

  const Chart& chart(std::string_view id) const {
    for (const auto& c : charts)
      if (c.id == id) return c;
    throw ChartError("atlas " + name + " has no chart '" + std::string(id) + "'");
  }
};

inline ChartCoords chart_apply(const Chart& c, std::span<const double> p) {
  if (!c.contains(p)) throw ChartError("point outside the region of chart " + c.id);
  return c.forward(p);
}

/// Coordinate change from chart a to chart b. A chart's transition to itself is the identity.
inline ChartCoords transition(const Chart& a, const Chart& b, const ChartCoords& xy) {
  if (a.id == b.id) return xy;
  const auto p = a.backward(xy);
  if (!a.contains(p) || !b.contains(p))
    throw ChartError("transition " + a.id + " -> " + b.id + ": point not in the overlap");
  return b.forward(p);
}

// ---------------------------------------------------------------------------
// Check reports

struct CheckReport {
  std::string check;
  bool pass = false;
  double max_violation = 0.0;
  std::size_t samples = 0;
  double tol = 0.0;
  std::uint64_t seed = 0;
  /// Why a check could not be evaluated, e.g. "no-overlap".
  std::string flag;
};

inline void to_json(nlohmann::json& j, const CheckReport& r) {
  j = nlohmann::json{{"check", r.check},     {"pass", r.pass}, {"max_violation", r.max_violation},
                     {"samples", r.samples}, {"tol", r.tol},   {"seed", r.seed}};
  if (!r.flag.empty()) j["flag"] = r.flag;
}

inline void from_json(const nlohmann::json& j, CheckReport& r) {
  j.at("check").get_to(r.check);
  j.at("pass").get_to(r.pass);
  j.at("max_violation").get_to(r.max_violation);
  j.at("samples").get_to(r.samples);
  j.at("tol").get_to(r.tol);
  j.at("seed").get_to(r.seed);
  r.flag = j.value("flag", std::string{});
}

inline constexpr double kDefaultFdStep = 1e-5;
inline constexpr double kDefaultLeafTol = 1e-9;

/// Central-difference estimate of max |d h_m / d y| over sampled overlap points.
inline CheckReport check_foliated_transition(const Chart& a, const Chart& b, std::size_t overlap_samples,
                                             double step = kDefaultFdStep, double tol = 1e-6,
                                             std::uint64_t seed = 0) {
  CheckReport report;
  report.check = "foliated-transition:" + a.id + "->" + b.id;
  report.tol = tol;
  report.seed = seed;
  if (a.m != b.m || a.n != b.n) throw ChartError("charts " + a.id + " and " + b.id + " disagree on (m, n)");
  if (!a.sample_region) throw ChartError("chart " + a.id + " has no region sampler");

  auto in_overlap = [&](const ChartCoords& xy) {
    const auto p = a.backward(xy);
    return a.contains(p) && b.contains(p);
  };

  std::mt19937_64 rng(seed);
  const std::size_t max_draws = std::max<std::size_t>(100, 50 * overlap_samples);
  std::size_t found = 0;
  double worst = 0.0;
  for (std::size_t draw = 0; draw < max_draws && found < overlap_samples; ++draw) {
    const auto p = a.sample_region(rng);
    if (!a.contains(p) || !b.contains(p)) continue;
    const auto xy = a.forward(p);
    bool usable = true;
    double local = 0.0;
    for (std::size_t j = 0; j < a.n && usable; ++j) {
      auto plus = xy, minus = xy;
      plus.y[j] += step;
      minus.y[j] -= step;
      if (!in_overlap(plus) || !in_overlap(minus)) {
        usable = false;
        break;
      }
      const auto hp = transition(a, b, plus);
      const auto hm = transition(a, b, minus);
      for (std::size_t i = 0; i < a.m; ++i)
        local = std::max(local, std::abs(hp.x[i] - hm.x[i]) / (2.0 * step));
    }
    if (!usable) continue;
    worst = std::max(worst, local);
    ++found;
  }
  report.samples = found;
  report.max_violation = worst;
  if (found == 0) {
    report.flag = "no-overlap";
    report.pass = false;
    return report;
  }
  report.pass = worst <= tol;
  return report;
}

/// Runs check_foliated_transition on every ordered pair of distinct charts that overlap.
inline std::vector<CheckReport> check_atlas(const Atlas& atlas, std::size_t overlap_samples,
                                            double step = kDefaultFdStep, double tol = 1e-6,
                                            std::uint64_t seed = 0) {
  std::vector<CheckReport> out;
  for (const auto& a : atlas.charts)
    for (const auto& b : atlas.charts) {
      if (a.id == b.id) continue;
      out.push_back(check_foliated_transition(a, b, overlap_samples, step, tol, seed));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Leaves

struct Leaf {
  std::string chart_id;
  std::vector<double> transverse;
  double tol = kDefaultLeafTol;

  /// Same chart and transverse coordinates within tol (absolute, sup norm).
  bool operator==(const Leaf& other) const {
    return chart_id == other.chart_id && transverse.size() == other.transverse.size() &&
           max_abs_diff(transverse, other.transverse) <= tol;
  }
};

inline Leaf leaf_of(const Chart& c, std::span<const double> p, double tol = kDefaultLeafTol) {
  return Leaf{c.id, chart_apply(c, p).x, tol};
}

inline bool same_leaf(const Chart& c, std::span<const double> p, std::span<const double> q,
                      double tol = kDefaultLeafTol) {
  return leaf_of(c, p, tol) == leaf_of(c, q, tol);
}

inline int invariant_count(int d, int n) {
  if (d < 0 || n < 0 || n > d)
    throw std::invalid_argument("invariant_count: need 0 <= n <= d (got d=" + std::to_string(d) +
                                ", n=" + std::to_string(n) + ")");
  return d - n;
}

// ---------------------------------------------------------------------------
// Catalog charts

/// Polar chart on the plane minus the non-positive x axis; angle in (-pi, pi).
inline Chart polar_plus_chart() {
  Chart c;
  c.id = "polar+";
  c.m = 1;
  c.n = 1;
  c.region = [](std::span<const double> p) { return !(p[1] == 0.0 && p[0] <= 0.0); };
  c.forward = [](std::span<const double> p) {
    return ChartCoords{{std::hypot(p[0], p[1])}, {std::atan2(p[1], p[0])}};
  };
  c.backward = [](const ChartCoords& xy) {
    return std::vector<double>{xy.x[0] * std::cos(xy.y[0]), xy.x[0] * std::sin(xy.y[0])};
  };
  c.sample_region = [](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    return std::vector<double>{u(rng), u(rng)};
  };
  return c;
}

/// Polar chart on the plane minus the non-negative x axis; angle in (0, 2pi).
inline Chart polar_minus_chart() {
  Chart c = polar_plus_chart();
  c.id = "polar-";
  c.region = [](std::span<const double> p) { return !(p[1] == 0.0 && p[0] >= 0.0); };
  c.forward = [](std::span<const double> p) {
    double angle = std::atan2(p[1], p[0]);
    if (angle < 0.0) angle += 2.0 * kPi;
    return ChartCoords{{std::hypot(p[0], p[1])}, {angle}};
  };
  return c;
}

/// The circle foliation of the punctured plane: leaves are circles about the origin, the
/// orbits of Rotation2D.
inline Atlas polar_atlas() {
  return Atlas{"polar", 2, 1, 1, {polar_plus_chart(), polar_minus_chart()}};
}

/// Chart whose transverse coordinate is sheared by 0.1 * angle, so h_m depends on y with
/// slope 0.1. Not a foliated chart pair with polar+.
inline Chart sheared_polar_chart(double shear = 0.1) {
  Chart c = polar_minus_chart();
  c.id = "sheared-polar";
  c.forward = [shear](std::span<const double> p) {
    double angle = std::atan2(p[1], p[0]);
    if (angle < 0.0) angle += 2.0 * kPi;
    return ChartCoords{{std::hypot(p[0], p[1]) + shear * angle}, {angle}};
  };
  c.backward = [shear](const ChartCoords& xy) {
    const double r = xy.x[0] - shear * xy.y[0];
    return std::vector<double>{r * std::cos(xy.y[0]), r * std::sin(xy.y[0])};
  };
  return c;
}

inline Atlas planted_defect_atlas() {
  return Atlas{"polar-defect", 2, 1, 1, {polar_plus_chart(), sheared_polar_chart()}};
}

/// Rectified chart on R^d: x = p[transverse_idx], y = p[leaf_idx].
inline Chart rectified_chart(std::string id, std::vector<std::size_t> transverse_idx,
                             std::vector<std::size_t> leaf_idx) {
  const std::size_t d = transverse_idx.size() + leaf_idx.size();
  std::vector<bool> seen(d, false);
  for (auto i : transverse_idx) {
    if (i >= d || seen[i]) throw ChartError("rectified chart: index partition is not a disjoint cover");
    seen[i] = true;
  }
  for (auto i : leaf_idx) {
    if (i >= d || seen[i]) throw ChartError("rectified chart: index partition is not a disjoint cover");
    seen[i] = true;
  }
  Chart c;
  c.id = std::move(id);
  c.m = transverse_idx.size();
  c.n = leaf_idx.size();
  c.region = [](std::span<const double>) { return true; };
  c.forward = [transverse_idx, leaf_idx](std::span<const double> p) {
    ChartCoords xy;
    for (auto i : transverse_idx) xy.x.push_back(p[i]);
    for (auto i : leaf_idx) xy.y.push_back(p[i]);
    return xy;
  };
  c.backward = [transverse_idx, leaf_idx, d](const ChartCoords& xy) {
    std::vector<double> p(d);
    for (std::size_t k = 0; k < transverse_idx.size(); ++k) p[transverse_idx[k]] = xy.x[k];
    for (std::size_t k = 0; k < leaf_idx.size(); ++k) p[leaf_idx[k]] = xy.y[k];
    return p;
  };
  c.sample_region = [d](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::vector<double> p(d);
    for (auto& v : p) v = u(rng);
    return p;
  };
  return c;
}

namespace detail {

inline std::vector<double> sample_sinusoid_coords(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> amp(0.2, 3.0), omega(0.5, 3.0), phase(-kPi, kPi), off(-3.0, 3.0);
  const double A = amp(rng);
  const double w = omega(rng);
  const double phi = phase(rng);
  const double c = off(rng);
  return {A, w, phi, c};
}

}  // namespace detail

/// Orbit chart of Translation on sinusoid coordinates: x = (A, omega, phi), y = (c).
inline Chart sinusoid_translation_chart() {
  Chart c = rectified_chart("sinusoid/translation", {0, 1, 2}, {3});
  c.region = [](std::span<const double> p) { return p[0] >= 0.0; };
  c.sample_region = detail::sample_sinusoid_coords;
  return c;
}

/// Orbit chart of the identity component of Affine on sinusoid coordinates:
/// x = (omega, phi), y = (A, c), region A > 0.
inline Chart sinusoid_affine_chart() {
  Chart c = rectified_chart("sinusoid/affine", {1, 2}, {0, 3});
  c.region = [](std::span<const double> p) { return p[0] > 0.0; };
  c.sample_region = detail::sample_sinusoid_coords;
  return c;
}

/// Orbit chart of Translation on polynomial coefficients: x = (c_1..c_{d-1}), y = (c_0).
inline Chart poly_translation_chart(std::size_t d) {
  if (d < 1) throw ChartError("polynomial chart needs d >= 1");
  std::vector<std::size_t> transverse;
  for (std::size_t i = 1; i < d; ++i) transverse.push_back(i);
  return rectified_chart("poly/translation", transverse, {0});
}

/// Orbit chart of the identity component of Affine on polynomial coefficients, region
/// c_1 > 0: x = (c_2/c_1, ..., c_{d-1}/c_1), y = (c_0, c_1).
inline Chart poly_affine_chart(std::size_t d) {
  if (d < 2) throw ChartError("polynomial affine chart needs d >= 2");
  Chart c;
  c.id = "poly/affine";
  c.m = d - 2;
  c.n = 2;
  c.region = [](std::span<const double> p) { return p[1] > 0.0; };
  c.forward = [d](std::span<const double> p) {
    ChartCoords xy;
    for (std::size_t i = 2; i < d; ++i) xy.x.push_back(p[i] / p[1]);
    xy.y = {p[0], p[1]};
    return xy;
  };
  c.backward = [d](const ChartCoords& xy) {
    std::vector<double> p(d);
    p[0] = xy.y[0];
    p[1] = xy.y[1];
    for (std::size_t i = 2; i < d; ++i) p[i] = xy.x[i - 2] * xy.y[1];
    return p;
  };
  c.sample_region = [d](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-3.0, 3.0), pos(0.2, 3.0);
    std::vector<double> p(d);
    for (auto& v : p) v = u(rng);
    p[1] = pos(rng);
    return p;
  };
  return c;
}

/// Catalog atlas whose leaves are the orbits of `group` acting on `task_family`.
inline Atlas orbit_foliation(GroupFamily group, const TaskFamily& task_family) {
  if (!task_family.has_action(group.kind))
    throw ChartError(task_family.name + " declares no action rule for " + std::string(to_string(group.kind)));
  const std::size_t d = task_family.coord_dim;
  auto single = [&](Chart c) {
    Atlas a;
    a.name = task_family.name + "/" + std::string(to_string(group.kind));
    a.d = d;
    a.m = c.m;
    a.n = c.n;
    a.charts.push_back(std::move(c));
    return a;
  };
  if (task_family.name == "sinusoid") {
    if (group.kind == GroupKind::Translation) return single(sinusoid_translation_chart());
    if (group.kind == GroupKind::Affine) return single(sinusoid_affine_chart());
  }
  if (task_family.name.rfind("poly", 0) == 0) {
    if (group.kind == GroupKind::Translation) return single(poly_translation_chart(d));
    if (group.kind == GroupKind::Affine && d >= 2) return single(poly_affine_chart(d));
  }
  throw ChartError("no catalog foliation for " + std::string(to_string(group.kind)) + " on " + task_family.name);
}

/// Orbits of Rotation2D on the punctured plane.
inline Atlas rotation_orbit_atlas() { return polar_atlas(); }

// ---------------------------------------------------------------------------
// Invariant quantities

struct InvariantQuantity {
  std::string name;
  std::size_t k = 0;
  std::function<std::vector<double>(std::span<const double>)> eval;
  /// How a group element moves a point of the space q is defined on.
  std::function<std::vector<double>(const GroupElement&, std::span<const double>)> act;
  std::function<std::vector<double>(std::mt19937_64&)> sample_point;
};

inline InvariantQuantity radius_quantity() {
  InvariantQuantity q;
  q.name = "radius";
  q.k = 1;
  q.eval = [](std::span<const double> p) { return std::vector<double>{std::sqrt(p[0] * p[0] + p[1] * p[1])}; };
  q.act = [](const GroupElement& g, std::span<const double> p) {
    const auto r = act_point2d(g, {p[0], p[1]});
    return std::vector<double>{r[0], r[1]};
  };
  q.sample_point = [](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    return std::vector<double>{u(rng), u(rng)};
  };
  return q;
}

inline InvariantQuantity first_coordinate_quantity() {
  InvariantQuantity q = radius_quantity();
  q.name = "first-coordinate";
  q.eval = [](std::span<const double> p) { return std::vector<double>{p[0]}; };
  return q;
}

/// (omega, phi) of a sinusoid task; invariant under the sinusoid family's Translation and
/// identity-component Affine actions.
inline InvariantQuantity sinusoid_shape_quantity() {
  InvariantQuantity q;
  q.name = "sinusoid-shape";
  q.k = 2;
  q.eval = [](std::span<const double> c) { return std::vector<double>{c[1], c[2]}; };
  q.act = [](const GroupElement& g, std::span<const double> c) {
    const auto moved = act_on_task(g, TaskPoint(sinusoid_family(), Coords(c.begin(), c.end())));
    return std::vector<double>(moved.coords().begin(), moved.coords().end());
  };
  q.sample_point = detail::sample_sinusoid_coords;
  return q;
}

/// Seeded check of q(p) = q(pi(p)) over random (point, element) pairs. Affine elements are
/// drawn from the identity component by default, the group whose orbits are the leaves.
inline CheckReport check_invariance(const InvariantQuantity& q, GroupFamily family, std::size_t samples,
                                    double tol, std::uint64_t seed = 0,
                                    ElementSampling sampling = ElementSampling::IdentityComponent) {
  CheckReport report;
  report.check = "invariance:" + q.name + "/" + std::string(to_string(family.kind));
  report.samples = samples;
  report.tol = tol;
  report.seed = seed;
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto p = q.sample_point(rng);
    const auto g = sample_element(family, rng, sampling);
    const auto before = q.eval(p);
    const auto after = q.eval(q.act(g, p));
    worst = std::max(worst, max_abs_diff(before, after));
  }
  report.max_violation = worst;
  report.pass = worst <= tol;
  return report;
}

}  // namespace foliate
