#include "foliate/pendulum.hpp"

#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

namespace foliate {
namespace {

TEST(DynamicsTest, RestingBottomIsFixedPoint) {
  const PendulumParams p;
  const auto d = dynamics(p, {0.0, 0.0});
  EXPECT_EQ(d.theta, 0.0);
  EXPECT_EQ(d.omega, 0.0);
}

TEST(DynamicsTest, MatchesClosedFormRightHandSide) {
  const PendulumParams p{2.0, 0.5, 0.3, 9.81};
  const auto d = dynamics(p, {0.7, -1.2});
  EXPECT_DOUBLE_EQ(d.theta, -1.2);
  EXPECT_DOUBLE_EQ(d.omega, -(9.81 / 0.5) * std::sin(0.7) - (0.3 / (2.0 * 0.25)) * -1.2);
}

TEST(SimulateTest, ZeroStepsReturnsInitialState) {
  const auto t = simulate(PendulumParams{}, {0.3, 0.1}, 0.01, 0);
  ASSERT_EQ(t.states.size(), 1u);
  EXPECT_EQ(t.states[0], (PendulumState{0.3, 0.1}));
  EXPECT_EQ(t.integrator, "RK4");
}

TEST(SimulateTest, InvalidParametersThrow) {
  EXPECT_THROW(simulate(PendulumParams{0.0, 1.0, 0.1, 9.81}, {}, 0.01, 10), std::invalid_argument);
  EXPECT_THROW(simulate(PendulumParams{1.0, -1.0, 0.1, 9.81}, {}, 0.01, 10), std::invalid_argument);
  EXPECT_THROW(simulate(PendulumParams{}, {}, 0.0, 10), std::invalid_argument);
}

TEST(SimulateTest, NonFiniteStateRaisesWithStep) {
  try {
    simulate(PendulumParams{}, {0.0, std::numeric_limits<double>::max()}, 1.0, 10);
    FAIL() << "expected SimulationError";
  } catch (const SimulationError& e) {
    EXPECT_GE(e.step(), 1u);
  }
}

TEST(SimulateTest, UndampedEnergyIsConserved) {
  const PendulumParams p{1.0, 1.0, 0.0, 9.81};
  const PendulumState s0{0.5, 0.0};
  const auto t = simulate(p, s0, 1e-3, 10000);
  const double e0 = pendulum_energy(p, s0);
  double drift = 0.0;
  for (const auto& s : t.states) drift = std::max(drift, std::abs(pendulum_energy(p, s) - e0));
  EXPECT_LT(drift, 1e-6);
}

TEST(SimulateTest, DampedEnergyDecreases) {
  const PendulumParams p{1.0, 1.0, 0.5, 9.81};
  const auto t = simulate(p, {1.0, 0.0}, 1e-3, 5000);
  for (std::size_t i = 1; i < t.states.size(); ++i)
    EXPECT_LE(pendulum_energy(p, t.states[i]), pendulum_energy(p, t.states[i - 1]) + 1e-12);
}

TEST(SimulateTest, SmallAnglePeriodMatchesLinearTheory) {
  for (double len : {0.5, 1.0, 2.0}) {
    const PendulumParams p{1.0, len, 0.0, 9.81};
    const auto t = simulate(p, {0.05, 0.0}, 1e-3, 20000);
    const double expected = 2 * kPi * std::sqrt(len / 9.81);
    EXPECT_NEAR(estimate_period(t), expected, 1e-3 * expected) << "length " << len;
  }
}

TEST(SimulateTest, PeriodIsNaNWithoutOscillation) {
  const auto t = simulate(PendulumParams{}, {0.0, 0.0}, 0.01, 100);
  EXPECT_TRUE(std::isnan(estimate_period(t)));
}

TEST(TrajectoryCsvTest, HeaderAndRows) {
  const auto t = simulate(PendulumParams{}, {0.1, 0.0}, 0.5, 2);
  std::ostringstream os;
  write_trajectory_csv(os, t);
  const auto s = os.str();
  EXPECT_EQ(s.substr(0, 14), "t,theta,omega\n");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
  EXPECT_NE(s.find("\n0,0.10000000000000001,0\n"), std::string::npos);
}

TEST(DynamicsDatasetTest, TargetsAreExactAccelerations) {
  const PendulumParams p{1.5, 0.8, 0.2, 9.81};
  const auto d = dynamics_dataset(p, 200, StateBox{}, 9);
  ASSERT_EQ(d.size(), 200u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_GE(d.inputs[i].theta, -kPi);
    EXPECT_LE(d.inputs[i].theta, kPi);
    EXPECT_GE(d.inputs[i].omega, -3.0);
    EXPECT_LE(d.inputs[i].omega, 3.0);
    EXPECT_EQ(d.targets[i], dynamics(p, d.inputs[i]).omega);
  }
  EXPECT_EQ(d, dynamics_dataset(p, 200, StateBox{}, 9));
}

TEST(DynamicsDatasetTest, NoiseIsSeeded) {
  const auto d = dynamics_dataset(PendulumParams{}, 50, StateBox{}, 1);
  EXPECT_EQ(with_noise(d, 0.0, 5), d);
  const auto a = with_noise(d, 0.1, 5), b = with_noise(d, 0.1, 5), c = with_noise(d, 0.1, 6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.inputs, d.inputs);
  EXPECT_THROW(with_noise(d, -1.0, 5), std::invalid_argument);
}

TEST(DynamicsDatasetTest, CsvHeader) {
  std::ostringstream os;
  write_pendulum_dataset_csv(os, dynamics_dataset(PendulumParams{}, 3, StateBox{}, 1));
  EXPECT_EQ(os.str().substr(0, 22), "theta,omega,omega_dot\n");
}

TEST(PendulumTaskTest, CoordinatesAndEvaluation) {
  const PendulumParams p{2.0, 0.5, 0.4, 9.81};
  const auto task = pendulum_task_point(p);
  EXPECT_DOUBLE_EQ(task.coord(0), 9.81 / 0.5);
  EXPECT_DOUBLE_EQ(task.coord(1), 0.4 / (2.0 * 0.25));
  const std::vector<double> x{0.3, -1.0};
  EXPECT_NEAR(evaluate(task, x), dynamics(p, {0.3, -1.0}).omega, 1e-12);
}

TEST(PendulumModelTest, LeastSquaresRecoversExactCoefficients) {
  const auto space = pendulum_model_space();
  EXPECT_EQ(space.leaf_idx, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(space.inv_idx, (std::vector<std::size_t>{2, 3, 4}));
  for (double m : {0.5, 2.0})
    for (double l : {0.5, 1.5}) {
      const PendulumParams p{m, l, 0.1, 9.81};
      const auto d = dynamics_dataset(p, 60, StateBox{}, 17);
      const auto fit = fit_scratch<PendulumState>(d, space, {});
      EXPECT_LE(max_abs_diff(fit.theta, pendulum_theta(p)), 1e-9);
      const std::vector<double> zeros(3, 0.0);
      const auto leaf = fit_on_leaf<PendulumState>(d, space, zeros, {});
      EXPECT_LE(max_abs_diff(leaf.theta, pendulum_theta(p)), 1e-9);
    }
}

}  // namespace
}  // namespace foliate
