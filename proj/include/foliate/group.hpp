#pragma once

// Parameterized transformation groups acting on task outputs and on the plane.
//
// Parameter layout is canonical and fixed:
//   Translation  [a]       y -> y + a
//   Affine       [a, b]    y -> b*y + a,  b != 0
//   Rotation2D   [angle]   p -> R(angle) p
// compose(outer, inner) is "outer after inner".

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "foliate/numeric.hpp"

namespace foliate {

enum class GroupKind { Translation, Affine, Rotation2D };

inline std::string_view to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::Translation: return "translation";
    case GroupKind::Affine: return "affine";
    case GroupKind::Rotation2D: return "rotation2d";
  }
  return "unknown";
}

inline GroupKind group_kind_from_string(std::string_view name) {
  if (name == "translation") return GroupKind::Translation;
  if (name == "affine") return GroupKind::Affine;
  if (name == "rotation2d" || name == "rotation") return GroupKind::Rotation2D;
  throw std::invalid_argument("unknown group family '" + std::string(name) + "'");
}

struct GroupFamily {
  GroupKind kind = GroupKind::Translation;

  constexpr std::size_t param_dim() const { return kind == GroupKind::Affine ? 2 : 1; }

  static constexpr GroupFamily translation() { return {GroupKind::Translation}; }
  static constexpr GroupFamily affine() { return {GroupKind::Affine}; }
  static constexpr GroupFamily rotation2d() { return {GroupKind::Rotation2D}; }

  constexpr bool operator==(const GroupFamily&) const = default;
};

class GroupError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Smallest |b| accepted for an affine element.
inline constexpr double kMinAffineScale = 1e-12;

class GroupElement {
 public:
  GroupElement(GroupFamily family, std::vector<double> params)
      : family_(family), params_(std::move(params)) {
    if (params_.size() != family_.param_dim())
      throw GroupError("group element for " + std::string(to_string(family_.kind)) + " needs " +
                       std::to_string(family_.param_dim()) + " parameter(s), got " +
                       std::to_string(params_.size()));
    for (double p : params_)
      if (!std::isfinite(p)) throw GroupError("group element parameters must be finite");
    if (family_.kind == GroupKind::Affine && !(std::abs(params_[1]) > kMinAffineScale))
      throw GroupError("affine element with b = 0 is not invertible");
  }

  static GroupElement translation(double a) { return {GroupFamily::translation(), {a}}; }
  static GroupElement affine(double a, double b) { return {GroupFamily::affine(), {a, b}}; }
  static GroupElement rotation(double angle) { return {GroupFamily::rotation2d(), {angle}}; }

  GroupFamily family() const { return family_; }
  std::span<const double> params() const { return params_; }

  /// Additive part a (Translation, Affine).
  double offset() const {
    require_output_action("offset");
    return params_[0];
  }
  /// Multiplicative part b; 1 for Translation.
  double scale() const {
    require_output_action("scale");
    return family_.kind == GroupKind::Affine ? params_[1] : 1.0;
  }
  double angle() const {
    if (family_.kind != GroupKind::Rotation2D) throw GroupError("angle() needs a Rotation2D element");
    return params_[0];
  }

  bool operator==(const GroupElement&) const = default;

 private:
  void require_output_action(const char* what) const {
    if (family_.kind == GroupKind::Rotation2D)
      throw GroupError(std::string(what) + "() is undefined for Rotation2D elements");
  }

  GroupFamily family_;
  std::vector<double> params_;
};

inline GroupElement identity(GroupFamily family) {
  switch (family.kind) {
    case GroupKind::Translation: return GroupElement::translation(0.0);
    case GroupKind::Affine: return GroupElement::affine(0.0, 1.0);
    case GroupKind::Rotation2D: return GroupElement::rotation(0.0);
  }
  throw GroupError("unknown group family");
}

inline GroupElement compose(const GroupElement& outer, const GroupElement& inner) {
  if (!(outer.family() == inner.family()))
    throw GroupError("compose: family mismatch (" + std::string(to_string(outer.family().kind)) +
                     " vs " + std::string(to_string(inner.family().kind)) + ")");
  const auto o = outer.params();
  const auto i = inner.params();
  switch (outer.family().kind) {
    case GroupKind::Translation: return GroupElement::translation(o[0] + i[0]);
    // b1*(b2*y + a2) + a1
    case GroupKind::Affine: return GroupElement::affine(o[1] * i[0] + o[0], o[1] * i[1]);
    case GroupKind::Rotation2D: return GroupElement::rotation(o[0] + i[0]);
  }
  throw GroupError("unknown group family");
}

inline GroupElement inverse(const GroupElement& g) {
  const auto p = g.params();
  switch (g.family().kind) {
    case GroupKind::Translation: return GroupElement::translation(-p[0]);
    case GroupKind::Affine: return GroupElement::affine(-p[0] / p[1], 1.0 / p[1]);
    case GroupKind::Rotation2D: return GroupElement::rotation(-p[0]);
  }
  throw GroupError("unknown group family");
}

/// Action on a scalar task output.
inline double act_pointwise(const GroupElement& g, double y) {
  switch (g.family().kind) {
    case GroupKind::Translation: return y + g.params()[0];
    case GroupKind::Affine: return g.params()[1] * y + g.params()[0];
    case GroupKind::Rotation2D:
      throw GroupError("Rotation2D acts on points of the plane, not on scalar outputs");
  }
  throw GroupError("unknown group family");
}

using Point2 = std::array<double, 2>;

inline Point2 act_point2d(const GroupElement& g, Point2 p) {
  if (g.family().kind != GroupKind::Rotation2D)
    throw GroupError("act_point2d needs a Rotation2D element");
  const double c = std::cos(g.angle());
  const double s = std::sin(g.angle());
  return {c * p[0] - s * p[1], s * p[0] + c * p[1]};
}

/// Which part of the group random elements are drawn from. Affine elements with b < 0
/// lie outside the connected component of the identity.
enum class ElementSampling { Full, IdentityComponent };

/// Seeded random element: a in [-5, 5], |b| in [0.2, 5], angle in [-pi, pi].
template <class Rng>
GroupElement sample_element(GroupFamily family, Rng& rng,
                            ElementSampling sampling = ElementSampling::Full) {
  std::uniform_real_distribution<double> offset(-5.0, 5.0);
  switch (family.kind) {
    case GroupKind::Translation: return GroupElement::translation(offset(rng));
    case GroupKind::Affine: {
      const double a = offset(rng);
      double b = std::uniform_real_distribution<double>(0.2, 5.0)(rng);
      if (sampling == ElementSampling::Full && std::bernoulli_distribution(0.5)(rng)) b = -b;
      return GroupElement::affine(a, b);
    }
    case GroupKind::Rotation2D:
      return GroupElement::rotation(std::uniform_real_distribution<double>(-kPi, kPi)(rng));
  }
  throw GroupError("unknown group family");
}

}  // namespace foliate
