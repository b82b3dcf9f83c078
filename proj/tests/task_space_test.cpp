#include "foliate/task_space.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "foliate/relate.hpp"

namespace foliate {
namespace {

TEST(EvaluateTest, SinusoidExamples) {
  EXPECT_EQ(evaluate(sinusoid(1, 1, 0, 0), 0.0), 0.0);
  EXPECT_EQ(evaluate(sinusoid(1, 1, 0, 2), 0.0), 2.0);
  EXPECT_DOUBLE_EQ(evaluate(sinusoid(3, 1, 0, 2), kPi / 2), 5.0);
}

TEST(EvaluateTest, OutsideDomainThrows) {
  EXPECT_THROW(evaluate(sinusoid(1, 1, 0, 0), -0.1), TaskError);
  EXPECT_THROW(evaluate(sinusoid(1, 1, 0, 0), 7.0), TaskError);
}

TEST(TaskPointTest, CanonicalizesNegativeAmplitude) {
  const auto f = sinusoid(-2, 1, 0.3, 1);
  EXPECT_EQ(f.coord(0), 2.0);
  EXPECT_NEAR(f.coord(2), 0.3 - kPi, 1e-15);
  for (double x : uniform_grid(0, 2 * kPi, 50)) EXPECT_NEAR(evaluate(f, x), -2 * std::sin(x + 0.3) + 1, 1e-12);
}

TEST(TaskPointTest, RejectsWrongCoordinateCount) {
  EXPECT_THROW(TaskPoint(sinusoid_family(), {1, 2, 3}), TaskError);
}

TEST(PolyFamilyTest, HornerEvaluation) {
  const TaskPoint p(poly_basis_family(3), {1, -2, 3});
  for (double x : {-1.0, 0.0, 0.5, 1.0}) EXPECT_DOUBLE_EQ(evaluate(p, x), 1 - 2 * x + 3 * x * x);
}

TEST(SampleDatasetTest, NoiseFreeTargetsEqualEvaluate) {
  const auto f = sinusoid(1.5, 2, 0.4, -1);
  const auto d = sample_dataset(f, 100, 0.0, 11);
  ASSERT_EQ(d.size(), 100u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_GE(d.inputs[i], 0.0);
    EXPECT_LE(d.inputs[i], 2 * kPi);
    EXPECT_EQ(d.targets[i], evaluate(f, d.inputs[i]));
  }
}

TEST(SampleDatasetTest, SameSeedIsBitIdentical) {
  const auto f = sinusoid(1, 1, 0, 0);
  const auto a = sample_dataset(f, 64, 0.3, 5);
  const auto b = sample_dataset(f, 64, 0.3, 5);
  EXPECT_EQ(a, b);
  std::ostringstream sa, sb;
  write_dataset_csv(sa, a);
  write_dataset_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_NE(a, sample_dataset(f, 64, 0.3, 6));
}

TEST(SampleDatasetTest, NoiseMeanWithinThreeStandardErrors) {
  const auto f = sinusoid(1, 1, 0, 0);
  const auto d = sample_dataset(f, 10000, 0.1, 123);
  double mean = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) mean += d.targets[i] - evaluate(f, d.inputs[i]);
  mean /= static_cast<double>(d.size());
  EXPECT_LE(std::abs(mean), 3 * 0.1 / std::sqrt(10000.0));  // 0.003 <= 0.004
}

TEST(SampleDatasetTest, Errors) {
  const auto f = sinusoid(1, 1, 0, 0);
  EXPECT_THROW(sample_dataset(f, 0, 0.0, 1), TaskError);
  EXPECT_THROW(sample_dataset(f, 5, -0.1, 1), TaskError);
}

TEST(DatasetCsvTest, HeaderAndRoundTrip) {
  const auto d = sample_dataset(sinusoid(1, 1, 0.1, 0), 17, 0.2, 9);
  std::ostringstream os;
  write_dataset_csv(os, d);
  EXPECT_EQ(os.str().substr(0, 4), "x,y\n");
  std::istringstream is(os.str());
  const auto back = read_dataset_csv(is);
  EXPECT_EQ(back.inputs, d.inputs);
  EXPECT_EQ(back.targets, d.targets);
}

TEST(TaskDistanceTest, Examples) {
  const auto f = sinusoid(1, 1, 0, 0);
  EXPECT_EQ(task_distance(f, f), 0.0);
  EXPECT_NEAR(task_distance(f, sinusoid(1, 1, 0, 2)), 2.0, 1e-12);
  EXPECT_THROW(task_distance(f, TaskPoint(poly_basis_family(2), {0, 1})), TaskError);
}

TEST(TaskDistanceTest, PseudometricOnRandomTriples) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> amp(0, 3), w(0.5, 3), ph(-kPi, kPi), off(-3, 3);
  auto draw = [&] { return sinusoid(amp(rng), w(rng), ph(rng), off(rng)); };
  for (int i = 0; i < 200; ++i) {
    const auto f = draw(), g = draw(), h = draw();
    const double fg = task_distance(f, g), gf = task_distance(g, f);
    EXPECT_GE(fg, 0.0);
    EXPECT_EQ(fg, gf);
    EXPECT_LE(task_distance(f, h), fg + task_distance(g, h) + 1e-9);
  }
}

TEST(SimilarTest, Examples) {
  const auto f = sinusoid(1, 1, 0, 0);
  EXPECT_TRUE(similar(f, f, 1e-6));
  EXPECT_FALSE(similar(f, sinusoid(1, 1, 0, 2), 0.5));
  EXPECT_TRUE(similar(f, sinusoid(1, 1, 0, 0.01), 0.5));
  EXPECT_THROW(similar(f, f, 0.0), TaskError);
}

TEST(VoronoiAssignTest, Examples) {
  const auto f = sinusoid(1, 1, 0, 0);
  const std::vector<TaskPoint> refs{f, sinusoid(1, 1, 0, 50)};
  EXPECT_EQ(voronoi_assign(f, refs), 0u);
  const std::vector<TaskPoint> tie{sinusoid(1, 1, 0, 1), sinusoid(1, 1, 0, 1)};
  EXPECT_EQ(voronoi_assign(f, tie), 0u);
  const std::vector<TaskPoint> far{f, sinusoid(1, 1, 0, 10)};
  EXPECT_EQ(voronoi_assign(sinusoid(1, 1, 0, 1.9), far), 0u);
  EXPECT_THROW(voronoi_assign(f, std::span<const TaskPoint>{}), TaskError);
}

// Relatedness (Translation orbits) and similarity (distance < 0.5) are independent.
TEST(RelatednessVsSimilarityTest, AllFourCombinations) {
  const auto f = sinusoid(1, 1, 0, 0);
  const double eps = 0.5;
  auto related = [&](const TaskPoint& g) { return solve_relating(f, g, GroupFamily::translation()).related(); };

  const auto rel_sim = sinusoid(1, 1, 0, 0.1);
  const auto rel_far = sinusoid(1, 1, 0, 2.0);
  const auto unrel_sim = sinusoid(1.1, 1, 0, 0);
  const auto unrel_far = sinusoid(1, 2, 0, 3);

  EXPECT_TRUE(related(rel_sim));
  EXPECT_TRUE(similar(f, rel_sim, eps));
  EXPECT_TRUE(related(rel_far));
  EXPECT_FALSE(similar(f, rel_far, eps));
  EXPECT_FALSE(related(unrel_sim));
  EXPECT_TRUE(similar(f, unrel_sim, eps));
  EXPECT_FALSE(related(unrel_far));
  EXPECT_FALSE(similar(f, unrel_far, eps));
}

}  // namespace
}  // namespace foliate
