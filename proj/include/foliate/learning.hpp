#pragma once

// Linear-in-parameters model spaces with an (invariant, leaf) parameter partition, and the
// learners that fit them: from scratch, on a leaf with the invariant block frozen, jointly
// over several tasks with hard parameter sharing, plus the equivariance check.
//
// Objective for a single dataset with n samples:
//   J(theta) = (1/n) * |X theta - y|^2 + l2 * sum_{j != constant} theta_j^2

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "foliate/group.hpp"
#include "foliate/numeric.hpp"
#include "foliate/relate.hpp"
#include "foliate/task_space.hpp"

namespace foliate {

class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <class Input>
using Feature = std::function<double(const Input&)>;

template <class Input>
struct ModelSpace {
  std::vector<Feature<Input>> basis;
  std::vector<std::string> names;
  std::vector<std::size_t> inv_idx;   // shared / frozen block, ascending
  std::vector<std::size_t> leaf_idx;  // per-task / optimized block, ascending
  /// Index of the basis function that is identically 1. Required by the parameter actions.
  std::optional<std::size_t> constant_index;

  std::size_t dim() const { return basis.size(); }
  std::size_t leaf_dim() const { return leaf_idx.size(); }
  std::size_t inv_dim() const { return inv_idx.size(); }
};

/// Validates and normalizes a model space. An empty `leaf_idx` means "everything not in
/// inv_idx".
template <class Input>
ModelSpace<Input> make_model_space(std::vector<Feature<Input>> basis, std::vector<std::string> names,
                                   std::vector<std::size_t> inv_idx, std::vector<std::size_t> leaf_idx,
                                   std::optional<std::size_t> constant_index = 0) {
  const std::size_t d = basis.size();
  if (d == 0) throw ModelError("model space needs at least one basis function");
  if (names.empty())
    for (std::size_t i = 0; i < d; ++i) names.push_back("phi" + std::to_string(i));
  if (names.size() != d) throw ModelError("model space: one name per basis function");
  std::vector<int> owner(d, 0);
  for (auto i : inv_idx) {
    if (i >= d || owner[i]) throw ModelError("model space: invariant indices must be distinct and < d");
    owner[i] = 1;
  }
  if (leaf_idx.empty())
    for (std::size_t i = 0; i < d; ++i)
      if (!owner[i]) leaf_idx.push_back(i);
  for (auto i : leaf_idx) {
    if (i >= d || owner[i]) throw ModelError("model space: partition must be a disjoint cover");
    owner[i] = 2;
  }
  if (std::count(owner.begin(), owner.end(), 0) != 0) throw ModelError("model space: partition must cover every index");
  if (constant_index && *constant_index >= d) throw ModelError("model space: constant index out of range");
  std::sort(inv_idx.begin(), inv_idx.end());
  std::sort(leaf_idx.begin(), leaf_idx.end());
  return ModelSpace<Input>{std::move(basis), std::move(names), std::move(inv_idx), std::move(leaf_idx), constant_index};
}

/// The same basis with a different partition.
template <class Input>
ModelSpace<Input> repartition(const ModelSpace<Input>& space, std::vector<std::size_t> inv_idx,
                              std::vector<std::size_t> leaf_idx = {}) {
  return make_model_space<Input>(space.basis, space.names, std::move(inv_idx), std::move(leaf_idx),
                                 space.constant_index);
}

template <class D>
concept RegressionData = requires(const D& d) {
  d.inputs.size();
  d.inputs[0];
  { d.targets[0] } -> std::convertible_to<double>;
};

template <class Input>
Eigen::MatrixXd design_matrix(const ModelSpace<Input>& space, std::span<const Input> inputs) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(inputs.size()), static_cast<Eigen::Index>(space.dim()));
  for (std::size_t i = 0; i < inputs.size(); ++i)
    for (std::size_t j = 0; j < space.dim(); ++j) {
      const double v = space.basis[j](inputs[i]);
      if (!std::isfinite(v)) throw ModelError("basis function " + space.names[j] + " is not finite on the data");
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  return X;
}

template <class Input>
double predict(const ModelSpace<Input>& space, std::span<const double> theta, const Input& x) {
  double acc = 0.0;
  for (std::size_t j = 0; j < space.dim(); ++j) acc += theta[j] * space.basis[j](x);
  return acc;
}

// ---------------------------------------------------------------------------
// Configuration and results

enum class FitMethod { ClosedFormLSQ, GradientDescent };

struct LearnerConfig {
  FitMethod method = FitMethod::ClosedFormLSQ;
  std::size_t max_iters = 10000;
  double step = 0.5;
  double tol = 1e-10;
  std::uint64_t seed = 0;
  double l2 = 0.0;
  /// Starting point for gradient descent (full length d); zeros when absent.
  std::optional<std::vector<double>> initial_theta = std::nullopt;
};

struct LossPoint {
  std::size_t iter = 0;
  double loss = 0.0;
  bool operator==(const LossPoint&) const = default;
};

struct FitResult {
  std::vector<double> theta;
  double final_loss = 0.0;
  std::vector<LossPoint> loss_curve;
  std::size_t iterations_used = 0;
  bool converged = false;
};

inline void to_json(nlohmann::json& j, const FitResult& r) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : r.loss_curve) curve.push_back({p.iter, p.loss});
  j = nlohmann::json{{"theta", r.theta},
                     {"final_loss", r.final_loss},
                     {"loss_curve", curve},
                     {"iterations_used", r.iterations_used},
                     {"converged", r.converged}};
}

inline void write_loss_curve_csv(std::ostream& os, std::span<const LossPoint> curve) {
  os << "iter,loss\n";
  for (const auto& p : curve) os << p.iter << ',' << format_double(p.loss) << '\n';
}

namespace detail {

inline Eigen::VectorXd to_eigen(std::span<const double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
  return out;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, std::span<const std::size_t> cols) {
  Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = X.col(static_cast<Eigen::Index>(cols[k]));
  return out;
}

/// Penalty weights (1 = ridge-penalized) for the given columns.
template <class Input>
Eigen::VectorXd penalty_mask(const ModelSpace<Input>& space, std::span<const std::size_t> cols) {
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    if (space.constant_index && cols[k] == *space.constant_index) mask(static_cast<Eigen::Index>(k)) = 0.0;
  return mask;
}

/// min_w (1/n)|X w - r|^2 + l2 * sum mask_k w_k^2 + offset
struct BlockProblem {
  Eigen::MatrixXd X;
  Eigen::VectorXd r;
  Eigen::VectorXd mask;
  double l2 = 0.0;
  double offset = 0.0;

  double n() const { return static_cast<double>(X.rows()); }

  double loss(const Eigen::VectorXd& w) const {
    const double fit = X.cols() == 0 ? r.squaredNorm() : (X * w - r).squaredNorm();
    return fit / n() + l2 * (mask.array() * w.array().square()).sum() + offset;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const {
    return (2.0 / n()) * (X.transpose() * (X * w - r)) + 2.0 * l2 * (mask.array() * w.array()).matrix();
  }

  /// Exact change loss(w - s g) - loss(w) of the quadratic, free of cancellation near the optimum.
  double step_change(const Eigen::VectorXd& g, double s) const {
    const double curvature = (X * g).squaredNorm() / n() + l2 * (mask.array() * g.array().square()).sum();
    return s * (s * curvature - g.squaredNorm());
  }
};

inline Eigen::VectorXd solve_closed_form(const BlockProblem& p) {
  const auto cols = p.X.cols();
  if (cols == 0) return Eigen::VectorXd(0);
  const double scale = 1.0 / std::sqrt(p.n());
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  if (p.l2 > 0.0) {
    A.resize(p.X.rows() + cols, cols);
    A.topRows(p.X.rows()) = scale * p.X;
    A.bottomRows(cols) = (std::sqrt(p.l2) * p.mask).asDiagonal();
    b = Eigen::VectorXd::Zero(p.X.rows() + cols);
    b.head(p.X.rows()) = scale * p.r;
  } else {
    A = scale * p.X;
    b = scale * p.r;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-12);
  if (qr.rank() < cols)
    throw RankDeficientError("normal equations are singular: rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(cols) + " unknowns");
  return qr.solve(b);
}

/// Gradient descent with step halving whenever a step would increase the objective, so the
/// recorded curve is non-increasing. Acceptance uses the exact quadratic change; the recorded
/// loss is clamped so roundoff in the direct evaluation cannot make the curve rise.
inline FitResult gradient_descent(const BlockProblem& p, Eigen::VectorXd w, const LearnerConfig& cfg) {
  if (!(cfg.step > 0.0) || !(cfg.tol > 0.0)) throw ModelError("learner step and tol must be positive");
  FitResult out;
  double loss = p.loss(w);
  out.loss_curve.push_back({0, loss});
  double step = cfg.step;
  std::size_t it = 0;
  while (true) {
    const Eigen::VectorXd g = p.gradient(w);
    if (g.size() == 0 || g.lpNorm<Eigen::Infinity>() <= cfg.tol) {
      out.converged = true;
      break;
    }
    if (it >= cfg.max_iters) break;
    ++it;
    if (p.step_change(g, step) <= 0.0) {
      w -= step * g;
      loss = std::min(loss, p.loss(w));
    } else {
      step *= 0.5;
    }
    out.loss_curve.push_back({it, loss});
  }
  out.iterations_used = it;
  out.final_loss = loss;
  out.theta = to_std(w);
  return out;
}

template <class Input>
FitResult fit_subset(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ModelSpace<Input>& space,
                     std::span<const std::size_t> free_idx, std::span<const std::size_t> fixed_idx,
                     std::span<const double> fixed_values, const LearnerConfig& cfg) {
  if (X.rows() == 0) throw ModelError("cannot fit an empty dataset");
  if (cfg.l2 < 0.0) throw ModelError("l2 must be >= 0");
  BlockProblem p;
  p.X = select_columns(X, free_idx);
  p.mask = penalty_mask(space, free_idx);
  p.l2 = cfg.l2;
  p.r = y;
  if (!fixed_idx.empty()) {
    const Eigen::VectorXd fixed = to_eigen(fixed_values);
    p.r -= select_columns(X, fixed_idx) * fixed;
    p.offset = cfg.l2 * (penalty_mask(space, fixed_idx).array() * fixed.array().square()).sum();
  }

  FitResult block;
  if (cfg.method == FitMethod::ClosedFormLSQ) {
    const Eigen::VectorXd w = solve_closed_form(p);
    block.theta = to_std(w);
    block.final_loss = p.loss(w);
    block.loss_curve.push_back({0, block.final_loss});
    block.converged = true;
  } else {
    Eigen::VectorXd w0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(free_idx.size()));
    if (cfg.initial_theta) {
      if (cfg.initial_theta->size() != space.dim()) throw ModelError("initial_theta must have length d");
      for (std::size_t k = 0; k < free_idx.size(); ++k) w0(static_cast<Eigen::Index>(k)) = (*cfg.initial_theta)[free_idx[k]];
    }
    block = gradient_descent(p, std::move(w0), cfg);
  }

  FitResult out = std::move(block);
  std::vector<double> theta(space.dim(), 0.0);
  for (std::size_t k = 0; k < free_idx.size(); ++k) theta[free_idx[k]] = out.theta[k];
  for (std::size_t k = 0; k < fixed_idx.size(); ++k) theta[fixed_idx[k]] = fixed_values[k];
  out.theta = std::move(theta);
  return out;
}

template <class Input, RegressionData Data>
Eigen::VectorXd targets_of(const Data& data) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.targets.size()));
  for (std::size_t i = 0; i < data.targets.size(); ++i) y(static_cast<Eigen::Index>(i)) = data.targets[i];
  return y;
}

template <class Input, RegressionData Data>
Eigen::MatrixXd design_of(const ModelSpace<Input>& space, const Data& data) {
  if (data.inputs.size() != data.targets.size()) throw ModelError("inputs and targets differ in length");
  return design_matrix<Input>(space, std::span<const Input>(data.inputs.data(), data.inputs.size()));
}

inline std::vector<std::size_t> all_indices(std::size_t d) {
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Objective and gradient

template <class Input, RegressionData Data>
double objective(const ModelSpace<Input>& space, const Data& data, std::span<const double> theta, double l2 = 0.0) {
  detail::BlockProblem p;
  p.X = detail::design_of<Input>(space, data);
  p.r = detail::targets_of<Input>(data);
  const auto all = detail::all_indices(space.dim());
  p.mask = detail::penalty_mask(space, all);
  p.l2 = l2;
  return p.loss(detail::to_eigen(theta));
}

template <class Input, RegressionData Data>
std::vector<double> objective_gradient(const ModelSpace<Input>& space, const Data& data,
                                       std::span<const double> theta, double l2 = 0.0) {
  detail::BlockProblem p;
  p.X = detail::design_of<Input>(space, data);
  p.r = detail::targets_of<Input>(data);
  const auto all = detail::all_indices(space.dim());
  p.mask = detail::penalty_mask(space, all);
  p.l2 = l2;
  return detail::to_std(p.gradient(detail::to_eigen(theta)));
}

// ---------------------------------------------------------------------------
// Fitting

template <class Input, RegressionData Data>
FitResult fit_scratch(const Data& data, const ModelSpace<Input>& space, const LearnerConfig& cfg) {
  const auto X = detail::design_of<Input>(space, data);
  const auto y = detail::targets_of<Input>(data);
  const auto all = detail::all_indices(space.dim());
  return detail::fit_subset<Input>(X, y, space, all, {}, {}, cfg);
}

/// Optimizes only the leaf block; the invariant block of the result is `frozen_inv` verbatim.
template <class Input, RegressionData Data>
FitResult fit_on_leaf(const Data& data, const ModelSpace<Input>& space, std::span<const double> frozen_inv,
                      const LearnerConfig& cfg) {
  if (frozen_inv.size() != space.inv_dim())
    throw ModelError("frozen invariant block has length " + std::to_string(frozen_inv.size()) + ", expected " +
                     std::to_string(space.inv_dim()));
  const auto X = detail::design_of<Input>(space, data);
  const auto y = detail::targets_of<Input>(data);
  return detail::fit_subset<Input>(X, y, space, space.leaf_idx, space.inv_idx, frozen_inv, cfg);
}

struct MultiTaskResult {
  std::vector<double> shared_inv;
  std::vector<std::vector<double>> per_task_leaf;
  std::vector<double> objective_curve;  // after each sweep; entry 0 is the starting point
  std::size_t sweeps = 0;
  bool converged = false;

  /// Full parameter vector of task t.
  template <class Input>
  std::vector<double> theta(const ModelSpace<Input>& space, std::size_t t) const {
    std::vector<double> out(space.dim(), 0.0);
    for (std::size_t k = 0; k < space.inv_idx.size(); ++k) out[space.inv_idx[k]] = shared_inv[k];
    for (std::size_t k = 0; k < space.leaf_idx.size(); ++k) out[space.leaf_idx[k]] = per_task_leaf.at(t)[k];
    return out;
  }
};

namespace detail {

inline Eigen::ColPivHouseholderQR<Eigen::MatrixXd> checked_qr(const Eigen::MatrixXd& A, const char* what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-12);
  if (qr.rank() < A.cols())
    throw RankDeficientError(std::string(what) + ": rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(A.cols()));
  return qr;
}

/// Ridge rows appended under a block so one QR solves the penalized problem.
inline Eigen::MatrixXd with_ridge(const Eigen::MatrixXd& A, const Eigen::VectorXd& mask, double weight) {
  if (weight <= 0.0) return A;
  Eigen::MatrixXd out(A.rows() + A.cols(), A.cols());
  out.topRows(A.rows()) = A;
  out.bottomRows(A.cols()) = (std::sqrt(weight) * mask).asDiagonal();
  return out;
}

inline Eigen::VectorXd pad_zeros(const Eigen::VectorXd& v, Eigen::Index extra) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size() + extra);
  out.head(v.size()) = v;
  return out;
}

}  // namespace detail

/// Hard parameter sharing: the invariant block is common to all tasks, the leaf block is
/// per task. Alternates exact block minimizations (shared block, then every leaf block)
/// until the relative objective change drops below cfg.tol or cfg.max_iters sweeps.
/// Objective: sum over tasks of J_t.
template <class Input, RegressionData Data>
MultiTaskResult fit_multitask(std::span<const Data> datasets, const ModelSpace<Input>& space, const LearnerConfig& cfg) {
  if (datasets.size() < 2) throw ModelError("fit_multitask needs at least two datasets");
  const std::size_t K = datasets.size();
  const Eigen::Index ni = static_cast<Eigen::Index>(space.inv_dim());
  const Eigen::Index nl = static_cast<Eigen::Index>(space.leaf_dim());
  const Eigen::VectorXd inv_mask = detail::penalty_mask(space, space.inv_idx);
  const Eigen::VectorXd leaf_mask = detail::penalty_mask(space, space.leaf_idx);

  std::vector<Eigen::MatrixXd> Xi(K), Xl(K);
  std::vector<Eigen::VectorXd> ys(K);
  std::vector<double> scale(K);
  Eigen::Index total_rows = 0;
  for (std::size_t t = 0; t < K; ++t) {
    const auto X = detail::design_of<Input>(space, datasets[t]);
    if (X.rows() == 0) throw ModelError("fit_multitask: empty dataset");
    Xi[t] = detail::select_columns(X, space.inv_idx);
    Xl[t] = detail::select_columns(X, space.leaf_idx);
    ys[t] = detail::targets_of<Input>(datasets[t]);
    scale[t] = 1.0 / std::sqrt(static_cast<double>(X.rows()));
    total_rows += X.rows();
  }

  // Stacked shared-block system; the ridge on the shared block is counted once per task.
  std::optional<Eigen::ColPivHouseholderQR<Eigen::MatrixXd>> shared_qr;
  if (ni > 0) {
    Eigen::MatrixXd A(total_rows, ni);
    Eigen::Index row = 0;
    for (std::size_t t = 0; t < K; ++t) {
      A.middleRows(row, Xi[t].rows()) = scale[t] * Xi[t];
      row += Xi[t].rows();
    }
    shared_qr = detail::checked_qr(detail::with_ridge(A, inv_mask, cfg.l2 * static_cast<double>(K)),
                                   "fit_multitask shared block");
  }
  std::vector<std::optional<Eigen::ColPivHouseholderQR<Eigen::MatrixXd>>> leaf_qr(K);
  if (nl > 0)
    for (std::size_t t = 0; t < K; ++t)
      leaf_qr[t] = detail::checked_qr(detail::with_ridge(scale[t] * Xl[t], leaf_mask, cfg.l2), "fit_multitask leaf block");

  Eigen::VectorXd shared = Eigen::VectorXd::Zero(ni);
  std::vector<Eigen::VectorXd> leaf(K, Eigen::VectorXd::Zero(nl));

  auto total_objective = [&] {
    double acc = 0.0;
    for (std::size_t t = 0; t < K; ++t) {
      Eigen::VectorXd res = -ys[t];
      if (ni > 0) res += Xi[t] * shared;
      if (nl > 0) res += Xl[t] * leaf[t];
      acc += res.squaredNorm() * scale[t] * scale[t] +
             cfg.l2 * ((inv_mask.array() * shared.array().square()).sum() +
                       (leaf_mask.array() * leaf[t].array().square()).sum());
    }
    return acc;
  };

  MultiTaskResult out;
  double prev = total_objective();
  out.objective_curve.push_back(prev);
  for (std::size_t sweep = 1; sweep <= cfg.max_iters; ++sweep) {
    if (ni > 0) {
      Eigen::VectorXd rhs(total_rows);
      Eigen::Index row = 0;
      for (std::size_t t = 0; t < K; ++t) {
        Eigen::VectorXd r = ys[t];
        if (nl > 0) r -= Xl[t] * leaf[t];
        rhs.segment(row, r.size()) = scale[t] * r;
        row += r.size();
      }
      shared = shared_qr->solve(cfg.l2 > 0.0 ? detail::pad_zeros(rhs, ni) : rhs);
    }
    if (nl > 0)
      for (std::size_t t = 0; t < K; ++t) {
        Eigen::VectorXd r = ys[t];
        if (ni > 0) r -= Xi[t] * shared;
        Eigen::VectorXd rhs = scale[t] * r;
        leaf[t] = leaf_qr[t]->solve(cfg.l2 > 0.0 ? detail::pad_zeros(rhs, nl) : rhs);
      }
    const double cur = total_objective();
    out.objective_curve.push_back(cur);
    out.sweeps = sweep;
    const double change = std::abs(prev - cur);
    if (cur <= 1e-28 || change <= cfg.tol * std::max(prev, 1e-300)) {
      out.converged = true;
      break;
    }
    prev = cur;
  }
  out.shared_inv = detail::to_std(shared);
  for (const auto& l : leaf) out.per_task_leaf.push_back(detail::to_std(l));
  return out;
}

// ---------------------------------------------------------------------------
// Sharing along Affine orbits

/// Tasks modeled as theta_t = a_t * e_constant + b_t * u with a shared unit "shape" u
/// (zero on the constant coefficient) and a per-task Affine element (a_t, b_t).
struct OrbitMultiTaskResult {
  std::vector<double> shape;
  std::vector<std::array<double, 2>> per_task;  // (a_t, b_t)
  std::vector<double> objective_curve;
  std::size_t sweeps = 0;
  bool converged = false;
};

/// Hard parameter sharing along the orbits of the output-affine group: the shared block is
/// the shape direction, the leaf block of each task is its (offset, scale). Alternates exact
/// block minimizations like fit_multitask; l2 is ignored.
template <class Input, RegressionData Data>
OrbitMultiTaskResult fit_multitask_on_orbit(std::span<const Data> datasets, const ModelSpace<Input>& space,
                                            const LearnerConfig& cfg) {
  if (datasets.size() < 2) throw ModelError("fit_multitask_on_orbit needs at least two datasets");
  if (!space.constant_index) throw ModelError("fit_multitask_on_orbit needs a constant basis function");
  const std::size_t K = datasets.size();
  const std::size_t c = *space.constant_index;
  std::vector<std::size_t> shape_idx;
  for (std::size_t j = 0; j < space.dim(); ++j)
    if (j != c) shape_idx.push_back(j);
  const Eigen::Index ns = static_cast<Eigen::Index>(shape_idx.size());
  if (ns == 0) throw ModelError("fit_multitask_on_orbit needs at least one non-constant basis function");

  std::vector<Eigen::MatrixXd> Xs(K);
  std::vector<Eigen::VectorXd> ones(K), ys(K);
  std::vector<double> scale(K);
  Eigen::Index total_rows = 0;
  for (std::size_t t = 0; t < K; ++t) {
    const auto X = detail::design_of<Input>(space, datasets[t]);
    Xs[t] = detail::select_columns(X, shape_idx);
    ones[t] = X.col(static_cast<Eigen::Index>(c));
    ys[t] = detail::targets_of<Input>(datasets[t]);
    scale[t] = 1.0 / std::sqrt(static_cast<double>(X.rows()));
    total_rows += X.rows();
  }

  // Start from the scratch fit of the first task.
  LearnerConfig first = cfg;
  first.method = FitMethod::ClosedFormLSQ;
  first.l2 = 0.0;
  const auto init = fit_scratch<Input>(datasets[0], space, first);
  Eigen::VectorXd u(ns);
  for (Eigen::Index k = 0; k < ns; ++k) u(k) = init.theta[shape_idx[static_cast<std::size_t>(k)]];
  if (!(u.norm() > 0.0)) throw RankDeficientError("fit_multitask_on_orbit: first task has no shape component");
  u.normalize();

  std::vector<Eigen::Vector2d> ab(K, Eigen::Vector2d(0.0, 1.0));
  auto solve_heads = [&] {
    for (std::size_t t = 0; t < K; ++t) {
      Eigen::MatrixXd A(Xs[t].rows(), 2);
      A.col(0) = ones[t];
      A.col(1) = Xs[t] * u;
      ab[t] = detail::checked_qr(scale[t] * A, "fit_multitask_on_orbit task head").solve(scale[t] * ys[t]);
    }
  };
  auto total_objective = [&] {
    double acc = 0.0;
    for (std::size_t t = 0; t < K; ++t)
      acc += (ones[t] * ab[t](0) + ab[t](1) * (Xs[t] * u) - ys[t]).squaredNorm() * scale[t] * scale[t];
    return acc;
  };

  solve_heads();
  OrbitMultiTaskResult out;
  double prev = total_objective();
  out.objective_curve.push_back(prev);
  for (std::size_t sweep = 1; sweep <= cfg.max_iters; ++sweep) {
    Eigen::MatrixXd A(total_rows, ns);
    Eigen::VectorXd rhs(total_rows);
    Eigen::Index row = 0;
    for (std::size_t t = 0; t < K; ++t) {
      A.middleRows(row, Xs[t].rows()) = scale[t] * ab[t](1) * Xs[t];
      rhs.segment(row, Xs[t].rows()) = scale[t] * (ys[t] - ab[t](0) * ones[t]);
      row += Xs[t].rows();
    }
    Eigen::VectorXd w = detail::checked_qr(A, "fit_multitask_on_orbit shared shape").solve(rhs);
    const double norm = w.norm();
    if (!(norm > 0.0)) throw RankDeficientError("fit_multitask_on_orbit: shape collapsed to zero");
    u = w / norm;
    for (auto& h : ab) h(1) *= norm;  // same model, unit shape
    solve_heads();
    const double cur = total_objective();
    out.objective_curve.push_back(cur);
    out.sweeps = sweep;
    if (cur <= 1e-28 || std::abs(prev - cur) <= cfg.tol * std::max(prev, 1e-300)) {
      out.converged = true;
      break;
    }
    prev = cur;
  }
  out.shape.assign(space.dim(), 0.0);
  for (Eigen::Index k = 0; k < ns; ++k) out.shape[shape_idx[static_cast<std::size_t>(k)]] = u(k);
  for (const auto& h : ab) out.per_task.push_back({h(0), h(1)});
  return out;
}

/// Reparameterizes `space` so that `direction` (a coefficient vector, zero on the constant)
/// becomes a basis function. Basis: [1, sum_j direction_j phi_j, complement...]; the leaf
/// block is {constant, direction} and the invariant block is the orthonormal complement.
/// The Affine orbit through `direction` is then the leaf with invariant block 0.
template <class Input>
ModelSpace<Input> rectify_along(const ModelSpace<Input>& space, std::span<const double> direction) {
  if (!space.constant_index) throw ModelError("rectify_along needs a constant basis function");
  if (direction.size() != space.dim()) throw ModelError("rectify_along: direction must have length d");
  const std::size_t c = *space.constant_index;
  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < space.dim(); ++j)
    if (j != c) others.push_back(j);
  const Eigen::Index ns = static_cast<Eigen::Index>(others.size());
  Eigen::VectorXd u(ns);
  for (Eigen::Index k = 0; k < ns; ++k) u(k) = direction[others[static_cast<std::size_t>(k)]];
  if (!(u.norm() > 0.0)) throw ModelError("rectify_along: direction has no non-constant component");
  u.normalize();
  // Orthonormal basis whose first column spans u.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(u);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(ns, ns);

  std::vector<Feature<Input>> basis;
  std::vector<std::string> names;
  basis.push_back(space.basis[c]);
  names.push_back(space.names[c]);
  auto combo = [&](const Eigen::VectorXd& w) {
    std::vector<std::pair<Feature<Input>, double>> terms;
    for (Eigen::Index k = 0; k < ns; ++k)
      if (w(k) != 0.0) terms.emplace_back(space.basis[others[static_cast<std::size_t>(k)]], w(k));
    return Feature<Input>([terms](const Input& x) {
      double acc = 0.0;
      for (const auto& [f, weight] : terms) acc += weight * f(x);
      return acc;
    });
  };
  const double sign = Q.col(0).dot(u) < 0.0 ? -1.0 : 1.0;
  basis.push_back(combo(sign * Q.col(0)));
  names.push_back("shape");
  std::vector<std::size_t> inv;
  for (Eigen::Index k = 1; k < ns; ++k) {
    basis.push_back(combo(Q.col(k)));
    names.push_back("complement" + std::to_string(k));
    inv.push_back(static_cast<std::size_t>(k) + 1);
  }
  return make_model_space<Input>(std::move(basis), std::move(names), inv, {0, 1}, std::size_t{0});
}

// ---------------------------------------------------------------------------
// Parameter actions and equivariance

/// Action of an output group on model parameters: for Translation theta' = theta + a e_c,
/// for Affine theta' = b theta + a e_c, with e_c the constant coefficient.
struct ParameterGroupAction {
  GroupFamily family;
  std::size_t constant_index = 0;

  std::vector<double> rule(const GroupElement& g, std::span<const double> theta) const {
    if (!(g.family() == family)) throw GroupError("parameter action: element from the wrong family");
    if (constant_index >= theta.size()) throw ModelError("parameter action: constant index out of range");
    std::vector<double> out(theta.begin(), theta.end());
    const double b = g.scale();
    if (b != 1.0)
      for (double& v : out) v *= b;
    out[constant_index] += g.offset();
    return out;
  }
};

template <class Input>
ParameterGroupAction parameter_action(GroupFamily family, const ModelSpace<Input>& space) {
  if (family.kind == GroupKind::Rotation2D) throw GroupError("no parameter action for Rotation2D");
  if (!space.constant_index) throw ModelError("parameter actions need a constant basis function");
  return ParameterGroupAction{family, *space.constant_index};
}

struct EquivarianceReport {
  bool pass = false;
  double param_gap = 0.0;
  /// Whether f is exactly representable in the model space (training MSE <= 1e-18).
  bool representable = false;
  std::vector<double> theta_f;
  std::vector<double> theta_g;
};

inline constexpr double kRepresentableLoss = 1e-18;

/// Fits f and g = g_elem(f) on the same noise-free inputs and compares action.rule(g_elem,
/// theta_f) with theta_g.
inline EquivarianceReport check_equivariance(const ModelSpace<double>& space, const ParameterGroupAction& action,
                                             const TaskPoint& f, const GroupElement& g_elem,
                                             const LearnerConfig& cfg, std::size_t n, double tol) {
  const TaskPoint g = act_on_task(g_elem, f);
  const Dataset df = sample_dataset(f, n, 0.0, cfg.seed);
  const Dataset dg = sample_dataset(g, n, 0.0, cfg.seed);
  const auto fit_f = fit_scratch<double>(df, space, cfg);
  const auto fit_g = fit_scratch<double>(dg, space, cfg);
  EquivarianceReport r;
  r.theta_f = fit_f.theta;
  r.theta_g = fit_g.theta;
  r.param_gap = max_abs_diff(action.rule(g_elem, fit_f.theta), fit_g.theta);
  r.representable = fit_f.final_loss <= kRepresentableLoss;
  r.pass = r.param_gap <= tol;
  return r;
}

// ---------------------------------------------------------------------------
// Catalog model spaces over scalar inputs

/// {1, sin(k x), cos(k x) for k = 1..harmonics}; constant first.
inline ModelSpace<double> harmonic_space(std::size_t harmonics, std::vector<std::size_t> inv_idx = {},
                                         std::vector<std::size_t> leaf_idx = {}) {
  std::vector<Feature<double>> basis{[](const double&) { return 1.0; }};
  std::vector<std::string> names{"1"};
  for (std::size_t k = 1; k <= harmonics; ++k) {
    const double w = static_cast<double>(k);
    basis.push_back([w](const double& x) { return std::sin(w * x); });
    names.push_back("sin" + std::to_string(k) + "x");
    basis.push_back([w](const double& x) { return std::cos(w * x); });
    names.push_back("cos" + std::to_string(k) + "x");
  }
  return make_model_space<double>(std::move(basis), std::move(names), std::move(inv_idx), std::move(leaf_idx), 0);
}

/// {1, x, ..., x^{d-1}}.
inline ModelSpace<double> monomial_space(std::size_t d, std::vector<std::size_t> inv_idx = {},
                                         std::vector<std::size_t> leaf_idx = {}) {
  std::vector<Feature<double>> basis;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < d; ++k) {
    const int p = static_cast<int>(k);
    basis.push_back([p](const double& x) { return std::pow(x, p); });
    names.push_back(k == 0 ? "1" : "x^" + std::to_string(k));
  }
  return make_model_space<double>(std::move(basis), std::move(names), std::move(inv_idx), std::move(leaf_idx), 0);
}

}  // namespace foliate
