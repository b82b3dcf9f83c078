#pragma once

// Damped pendulum dynamics, fixed-step RK4 trajectories, and the (m, l) task family used
// for transfer experiments.
//
//   theta_dot = omega
//   omega_dot = -(g / l) sin(theta) - (gamma / (m l^2)) omega

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "foliate/learning.hpp"
#include "foliate/numeric.hpp"
#include "foliate/task_space.hpp"

namespace foliate {

struct PendulumParams {
  double mass = 1.0;     // kg
  double length = 1.0;   // m
  double damping = 0.1;  // N m s
  double gravity = 9.81; // m / s^2

  void validate() const {
    if (!(mass > 0.0) || !(length > 0.0) || !(gravity > 0.0) || !(damping >= 0.0) || !std::isfinite(mass) ||
        !std::isfinite(length) || !std::isfinite(gravity) || !std::isfinite(damping))
      throw std::invalid_argument("pendulum needs m, l, g > 0 and damping >= 0");
  }
};

struct PendulumState {
  double theta = 0.0;
  double omega = 0.0;
  bool operator==(const PendulumState&) const = default;
};

inline PendulumState dynamics(const PendulumParams& p, PendulumState s) {
  return {s.omega, -(p.gravity / p.length) * std::sin(s.theta) -
                       (p.damping / (p.mass * p.length * p.length)) * s.omega};
}

inline double pendulum_energy(const PendulumParams& p, PendulumState s) {
  return 0.5 * p.mass * p.length * p.length * s.omega * s.omega - p.mass * p.gravity * p.length * std::cos(s.theta);
}

struct Trajectory {
  std::vector<double> times;
  std::vector<PendulumState> states;
  PendulumParams params;
  double dt = 0.0;
  std::string integrator = "RK4";
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::size_t step) : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

inline Trajectory simulate(const PendulumParams& p, PendulumState init, double dt, std::size_t steps) {
  p.validate();
  if (!(dt > 0.0)) throw std::invalid_argument("simulate: dt must be positive");
  Trajectory traj;
  traj.params = p;
  traj.dt = dt;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(init);
  auto axpy = [](PendulumState s, double h, PendulumState k) { return PendulumState{s.theta + h * k.theta, s.omega + h * k.omega}; };
  PendulumState s = init;
  for (std::size_t i = 1; i <= steps; ++i) {
    const auto k1 = dynamics(p, s);
    const auto k2 = dynamics(p, axpy(s, 0.5 * dt, k1));
    const auto k3 = dynamics(p, axpy(s, 0.5 * dt, k2));
    const auto k4 = dynamics(p, axpy(s, dt, k3));
    s.theta += dt / 6.0 * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta);
    s.omega += dt / 6.0 * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega);
    if (!std::isfinite(s.theta) || !std::isfinite(s.omega))
      throw SimulationError("pendulum state blew up at step " + std::to_string(i), i);
    traj.times.push_back(static_cast<double>(i) * dt);
    traj.states.push_back(s);
  }
  return traj;
}

/// Mean time between successive upward zero crossings of theta (linear interpolation).
/// NaN when fewer than two crossings occur.
inline double estimate_period(const Trajectory& traj) {
  std::vector<double> crossings;
  for (std::size_t i = 1; i < traj.states.size(); ++i) {
    const double a = traj.states[i - 1].theta;
    const double b = traj.states[i].theta;
    if (a < 0.0 && b >= 0.0) crossings.push_back(traj.times[i - 1] + traj.dt * (-a) / (b - a));
  }
  if (crossings.size() < 2) return std::nan("");
  return (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,theta,omega\n";
  for (std::size_t i = 0; i < traj.states.size(); ++i)
    os << format_double(traj.times[i]) << ',' << format_double(traj.states[i].theta) << ','
       << format_double(traj.states[i].omega) << '\n';
}

// ---------------------------------------------------------------------------
// Regression datasets (theta, omega) -> omega_dot

struct StateBox {
  Interval theta{-kPi, kPi};
  Interval omega{-3.0, 3.0};
};

struct PendulumDataset {
  std::vector<PendulumState> inputs;
  std::vector<double> targets;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  std::size_t size() const { return inputs.size(); }
  bool operator==(const PendulumDataset&) const = default;
};

/// Uniform states in the box, noise-free angular accelerations as targets.
inline PendulumDataset dynamics_dataset(const PendulumParams& p, std::size_t n, const StateBox& box, std::uint64_t seed) {
  p.validate();
  if (n == 0) throw std::invalid_argument("dynamics_dataset: n must be at least 1");
  if (!(box.theta.lo <= box.theta.hi) || !(box.omega.lo <= box.omega.hi))
    throw std::invalid_argument("dynamics_dataset: empty state box");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> th(box.theta.lo, box.theta.hi), om(box.omega.lo, box.omega.hi);
  PendulumDataset d;
  d.seed = seed;
  d.inputs.resize(n);
  d.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Two separate statements keep the draw order fixed.
    const double theta = th(rng);
    const double omega = om(rng);
    d.inputs[i] = {theta, omega};
    d.targets[i] = dynamics(p, d.inputs[i]).omega;
  }
  return d;
}

/// Adds i.i.d. Gaussian noise to the targets from its own seeded stream.
inline PendulumDataset with_noise(PendulumDataset d, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (sigma == 0.0) return d;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& y : d.targets) y += sigma * noise(rng);
  d.noise_sigma = sigma;
  return d;
}

inline void write_pendulum_dataset_csv(std::ostream& os, const PendulumDataset& d) {
  os << "theta,omega,omega_dot\n";
  for (std::size_t i = 0; i < d.size(); ++i)
    os << format_double(d.inputs[i].theta) << ',' << format_double(d.inputs[i].omega) << ','
       << format_double(d.targets[i]) << '\n';
}

// ---------------------------------------------------------------------------
// The pendulum task family

/// Coordinates (c1, c2) = (g/l, gamma/(m l^2)); inputs (theta, omega) on the default box;
/// value = -c1 sin(theta) - c2 omega.
inline const TaskFamilyPtr& pendulum_task_family() {
  static const TaskFamilyPtr fam = [] {
    auto f = std::make_shared<TaskFamily>();
    f->name = "pendulum";
    f->coord_dim = 2;
    f->domain = {Interval{-kPi, kPi}, Interval{-10.0, 10.0}};
    f->evaluator = [](std::span<const double> c, std::span<const double> x) {
      return -c[0] * std::sin(x[0]) - c[1] * x[1];
    };
    return TaskFamilyPtr(std::move(f));
  }();
  return fam;
}

inline TaskPoint pendulum_task_point(const PendulumParams& p) {
  p.validate();
  return TaskPoint(pendulum_task_family(),
                   {p.gravity / p.length, p.damping / (p.mass * p.length * p.length)});
}

/// Basis {sin theta, omega, 1, theta, theta*omega}. Leaf block {sin theta, omega}; the
/// invariant block {1, theta, theta*omega} is zero for every pendulum.
inline ModelSpace<PendulumState> pendulum_model_space() {
  std::vector<Feature<PendulumState>> basis{
      [](const PendulumState& s) { return std::sin(s.theta); },
      [](const PendulumState& s) { return s.omega; },
      [](const PendulumState&) { return 1.0; },
      [](const PendulumState& s) { return s.theta; },
      [](const PendulumState& s) { return s.theta * s.omega; },
  };
  return make_model_space<PendulumState>(std::move(basis), {"sin(theta)", "omega", "1", "theta", "theta*omega"},
                                         {2, 3, 4}, {0, 1}, std::size_t{2});
}

/// Exact coefficients of a pendulum in pendulum_model_space().
inline std::vector<double> pendulum_theta(const PendulumParams& p) {
  const auto task = pendulum_task_point(p);
  return {-task.coord(0), -task.coord(1), 0.0, 0.0, 0.0};
}

}  // namespace foliate
