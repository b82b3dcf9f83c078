#include "foliate/relate.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace foliate {
namespace {

double max_grid_gap(const TaskPoint& a, const TaskPoint& b, std::size_t n = 100) {
  double worst = 0.0;
  const auto& dom = scalar_domain(a.family());
  for (double x : uniform_grid(dom.lo, dom.hi, n)) worst = std::max(worst, std::abs(evaluate(a, x) - evaluate(b, x)));
  return worst;
}

TEST(ActOnTaskTest, AffineOnSinusoidMatchesPointwiseAction) {
  const auto f = sinusoid(1, 1, 0, 0);
  const auto g = GroupElement::affine(2, 3);
  const auto moved = act_on_task(g, f);
  EXPECT_EQ(moved.coord(0), 3.0);
  EXPECT_EQ(moved.coord(1), 1.0);
  EXPECT_EQ(moved.coord(2), 0.0);
  EXPECT_EQ(moved.coord(3), 2.0);
  for (double x : uniform_grid(0, 2 * kPi, 100)) EXPECT_NEAR(evaluate(moved, x), 3 * std::sin(x) + 2, 1e-9);
}

TEST(ActOnTaskTest, TranslationExample) {
  const auto moved = act_on_task(GroupElement::translation(-1), sinusoid(2, 1, 0, 1));
  EXPECT_EQ(moved.coord(0), 2.0);
  EXPECT_EQ(moved.coord(3), 0.0);
}

TEST(ActOnTaskTest, IdentityLeavesTaskUnchanged) {
  const auto f = sinusoid(1.3, 2.1, -0.4, 0.7);
  for (auto fam : {GroupFamily::translation(), GroupFamily::affine()}) {
    const auto same = act_on_task(identity(fam), f);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(same.coord(i), f.coord(i));
  }
}

TEST(ActOnTaskTest, NoRuleThrows) {
  EXPECT_THROW(act_on_task(GroupElement::rotation(1.0), sinusoid(1, 1, 0, 0)), GroupError);
}

TEST(ActOnTaskTest, NegativeScaleStillMatchesPointwise) {
  const auto f = sinusoid(1.2, 1.5, 0.3, -0.5);
  const auto g = GroupElement::affine(0.5, -2.0);
  const auto moved = act_on_task(g, f);
  EXPECT_GE(moved.coord(0), 0.0);
  for (double x : uniform_grid(0, 2 * kPi, 100)) EXPECT_NEAR(evaluate(moved, x), act_pointwise(g, evaluate(f, x)), 1e-9);
}

TEST(ActOnTaskTest, CompatibleWithComposition) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> amp(0.2, 3), w(0.5, 3), ph(-kPi, kPi), off(-3, 3);
  for (auto fam : {GroupFamily::translation(), GroupFamily::affine()})
    for (int i = 0; i < 200; ++i) {
      const auto f = sinusoid(amp(rng), w(rng), ph(rng), off(rng));
      const auto g1 = sample_element(fam, rng), g2 = sample_element(fam, rng);
      EXPECT_LE(max_grid_gap(act_on_task(compose(g1, g2), f), act_on_task(g1, act_on_task(g2, f))), 1e-9);
      // And each action rule agrees with the output-space action.
      const auto moved = act_on_task(g1, f);
      for (double x : uniform_grid(0, 2 * kPi, 100)) EXPECT_NEAR(evaluate(moved, x), act_pointwise(g1, evaluate(f, x)), 1e-9);
    }
}

TEST(SolveRelatingTest, RecoversTranslation) {
  const auto f = sinusoid(1, 1, 0, 0);
  const auto g = act_on_task(GroupElement::translation(2), f);
  const auto r = solve_relating(f, g, GroupFamily::translation());
  ASSERT_TRUE(r.related());
  EXPECT_NEAR(r.element->params()[0], 2.0, 1e-12);
}

TEST(SolveRelatingTest, SineAndCosineAreNotTranslates) {
  const auto f = sinusoid(1, 1, 0, 0);
  const auto g = sinusoid(1, 1, kPi / 2, 0);
  const auto r = solve_relating(f, g, GroupFamily::translation(), 0.49);
  EXPECT_FALSE(r.related());
  EXPECT_FALSE(r.degenerate);
  EXPECT_GT(r.max_residual, 0.5);
}

TEST(SolveRelatingTest, ReflexiveGivesIdentity) {
  const auto f = sinusoid(1.7, 2, 0.2, -1);
  for (auto fam : {GroupFamily::translation(), GroupFamily::affine()}) {
    const auto r = solve_relating(f, f, fam);
    ASSERT_TRUE(r.related());
    const auto id = identity(fam);
    for (std::size_t i = 0; i < fam.param_dim(); ++i) EXPECT_NEAR(r.element->params()[i], id.params()[i], 1e-12);
  }
}

TEST(SolveRelatingTest, RecoversAffine) {
  const auto f = sinusoid(1, 2, 0.5, 0.3);
  const auto g = act_on_task(GroupElement::affine(-1.5, 2.5), f);
  const auto r = solve_relating(f, g, GroupFamily::affine());
  ASSERT_TRUE(r.related());
  EXPECT_NEAR(r.element->offset(), -1.5, 1e-10);
  EXPECT_NEAR(r.element->scale(), 2.5, 1e-10);
}

TEST(SolveRelatingTest, ConstantTaskUnderAffineIsDegenerate) {
  const auto f = sinusoid(0, 1, 0, 2);
  const auto r = solve_relating(f, sinusoid(0, 1, 0, 5), GroupFamily::affine());
  EXPECT_FALSE(r.related());
  EXPECT_TRUE(r.degenerate);
}

TEST(SolveRelatingTest, GridTooSmallThrows) {
  const auto f = sinusoid(1, 1, 0, 0);
  const std::vector<double> grid{0.0, 1.0};
  EXPECT_THROW(solve_relating(f, f, GroupFamily::affine(), grid), GroupError);
  EXPECT_NO_THROW(solve_relating(f, f, GroupFamily::translation(), grid));
}

TEST(SolveRelatingTest, RotationIsRejected) {
  const auto f = sinusoid(1, 1, 0, 0);
  EXPECT_THROW(solve_relating(f, f, GroupFamily::rotation2d()), GroupError);
}

class EquivalenceRelationTest : public ::testing::TestWithParam<GroupKind> {};

TEST_P(EquivalenceRelationTest, ReflexiveSymmetricTransitive) {
  const GroupFamily fam{GetParam()};
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> amp(0.2, 3), w(0.5, 3), ph(-kPi, kPi), off(-3, 3);
  const auto grid = default_relate_grid(*sinusoid_family());
  for (int i = 0; i < 200; ++i) {
    const auto f = sinusoid(amp(rng), w(rng), ph(rng), off(rng));
    const auto g = act_on_task(sample_element(fam, rng), f);
    const auto h = act_on_task(sample_element(fam, rng), g);
    ASSERT_TRUE(solve_relating(f, f, fam, grid, 1e-6).related());
    const auto fg = solve_relating(f, g, fam, grid, 1e-6);
    const auto gh = solve_relating(g, h, fam, grid, 1e-6);
    ASSERT_TRUE(fg.related());
    ASSERT_TRUE(gh.related());
    EXPECT_LE(max_grid_gap(act_on_task(inverse(*fg.element), g), f, grid.size()), 1e-6);
    EXPECT_LE(max_grid_gap(act_on_task(compose(*gh.element, *fg.element), f), h, grid.size()), 1e-6);
  }
}

INSTANTIATE_TEST_SUITE_P(OutputGroups, EquivalenceRelationTest,
                         ::testing::Values(GroupKind::Translation, GroupKind::Affine));

TEST(OrbitGridTest, Examples) {
  const auto f = sinusoid(1, 1, 0, 0);
  const std::vector<std::vector<double>> params{{-1}, {0}, {1}};
  const auto orbit = orbit_grid(f, GroupFamily::translation(), params);
  ASSERT_EQ(orbit.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i)
    for (double x : uniform_grid(0, 2 * kPi, 50))
      EXPECT_NEAR(evaluate(orbit[i], x), std::sin(x) + params[i][0], 1e-12);
  for (const auto& a : orbit)
    for (const auto& b : orbit) EXPECT_TRUE(solve_relating(a, b, GroupFamily::translation()).related());

  EXPECT_TRUE(orbit_grid(f, GroupFamily::translation(), {}).empty());
  const std::vector<std::vector<double>> id{{0, 1}};
  const auto same = orbit_grid(f, GroupFamily::affine(), id);
  ASSERT_EQ(same.size(), 1u);
  EXPECT_EQ(max_grid_gap(same[0], f), 0.0);

  const std::vector<std::vector<double>> bad{{0, 0}};
  EXPECT_THROW(orbit_grid(f, GroupFamily::affine(), bad), GroupError);
}

}  // namespace
}  // namespace foliate
