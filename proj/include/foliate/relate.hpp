#pragma once

// Group actions on tasks, orbits, and the relatedness solver.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "foliate/group.hpp"
#include "foliate/task_space.hpp"

namespace foliate {

inline TaskPoint act_on_task(const GroupElement& g, const TaskPoint& f) {
  const auto& fam = f.family();
  auto it = fam.action_rules.find(g.family().kind);
  if (it == fam.action_rules.end())
    throw GroupError(fam.name + " declares no action rule for " + std::string(to_string(g.family().kind)));
  return TaskPoint(f.family_ptr(), it->second(g, f.coords()));
}

inline std::vector<TaskPoint> orbit_grid(const TaskPoint& f, GroupFamily family,
                                         std::span<const std::vector<double>> param_grid) {
  std::vector<TaskPoint> out;
  out.reserve(param_grid.size());
  for (const auto& params : param_grid) out.push_back(act_on_task(GroupElement(family, params), f));
  return out;
}

inline constexpr std::size_t kDefaultRelateGrid = 101;
inline constexpr double kDefaultRelateTol = 1e-6;

struct RelateResult {
  std::optional<GroupElement> element;
  /// Set when the action is not locally free at f (constant f under Affine).
  bool degenerate = false;
  /// Largest |pi(f)(x) - g(x)| over the grid for the best-fitting element; NaN if none was fitted.
  double max_residual = std::nan("");

  bool related() const { return element.has_value(); }
};

inline std::vector<double> default_relate_grid(const TaskFamily& fam) {
  const auto& dom = scalar_domain(fam);
  return uniform_grid(dom.lo, dom.hi, kDefaultRelateGrid);
}

/// Least-squares recovery of the element relating f to g, accepted when the max residual on
/// the grid is within tol.
inline RelateResult solve_relating(const TaskPoint& f, const TaskPoint& g, GroupFamily family,
                                   std::span<const double> grid, double tol = kDefaultRelateTol) {
  if (family.kind == GroupKind::Rotation2D)
    throw GroupError("solve_relating: Rotation2D does not act on scalar-valued tasks");
  if (grid.size() < family.param_dim() + 1)
    throw GroupError("solve_relating: grid needs at least " + std::to_string(family.param_dim() + 1) + " points");
  if (!f.family().same_as(g.family())) throw TaskError("solve_relating: family mismatch");

  const std::size_t n = grid.size();
  std::vector<double> fv(n), gv(n);
  for (std::size_t i = 0; i < n; ++i) {
    fv[i] = evaluate(f, grid[i]);
    gv[i] = evaluate(g, grid[i]);
  }

  RelateResult result;
  std::optional<GroupElement> candidate;
  if (family.kind == GroupKind::Translation) {
    double shift = 0.0;
    for (std::size_t i = 0; i < n; ++i) shift += gv[i] - fv[i];
    candidate = GroupElement::translation(shift / static_cast<double>(n));
  } else {
    double mf = 0.0, mg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mf += fv[i];
      mg += gv[i];
    }
    mf /= static_cast<double>(n);
    mg /= static_cast<double>(n);
    double sff = 0.0, sfg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sff += (fv[i] - mf) * (fv[i] - mf);
      sfg += (fv[i] - mf) * (gv[i] - mg);
    }
    const double spread = std::sqrt(sff / static_cast<double>(n));
    if (spread <= 1e-10 * std::max(1.0, std::abs(mf))) {
      result.degenerate = true;
      return result;
    }
    const double b = sfg / sff;
    if (!(std::abs(b) > kMinAffineScale)) return result;
    candidate = GroupElement::affine(mg - b * mf, b);
  }

  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(act_pointwise(*candidate, fv[i]) - gv[i]));
  result.max_residual = worst;
  if (worst <= tol) result.element = std::move(candidate);
  return result;
}

inline RelateResult solve_relating(const TaskPoint& f, const TaskPoint& g, GroupFamily family,
                                   double tol = kDefaultRelateTol) {
  const auto grid = default_relate_grid(f.family());
  return solve_relating(f, g, family, grid, tol);
}

}  // namespace foliate
