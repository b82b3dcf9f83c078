#include "foliate/group.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace foliate {
namespace {

void ExpectParamsNear(const GroupElement& a, const GroupElement& b, double tol) {
  ASSERT_EQ(a.family(), b.family());
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_NEAR(a.params()[i], b.params()[i], tol) << "param " << i;
}

TEST(GroupFamilyTest, ParamDimMatchesKind) {
  EXPECT_EQ(GroupFamily::translation().param_dim(), 1u);
  EXPECT_EQ(GroupFamily::affine().param_dim(), 2u);
  EXPECT_EQ(GroupFamily::rotation2d().param_dim(), 1u);
}

TEST(GroupElementTest, RejectsNonInvertibleAffine) {
  EXPECT_THROW(GroupElement::affine(1.0, 0.0), GroupError);
  EXPECT_THROW(GroupElement::affine(1.0, 1e-13), GroupError);
  EXPECT_NO_THROW(GroupElement::affine(1.0, -1e-6));
}

TEST(GroupElementTest, RejectsWrongParamCount) {
  EXPECT_THROW(GroupElement(GroupFamily::affine(), {1.0}), GroupError);
  EXPECT_THROW(GroupElement(GroupFamily::translation(), {1.0, 2.0}), GroupError);
  EXPECT_THROW(GroupElement(GroupFamily::rotation2d(), {}), GroupError);
}

TEST(GroupTest, Identity) {
  EXPECT_EQ(identity(GroupFamily::translation()).params()[0], 0.0);
  const auto aff = identity(GroupFamily::affine());
  EXPECT_EQ(aff.params()[0], 0.0);
  EXPECT_EQ(aff.params()[1], 1.0);
  EXPECT_EQ(identity(GroupFamily::rotation2d()).params()[0], 0.0);
}

TEST(GroupTest, ComposeAffineExpandsSymbolically) {
  // b1*(b2*y + a2) + a1 with (a1,b1) = (1,2), (a2,b2) = (3,4): 8y + 7.
  const auto g = compose(GroupElement::affine(1, 2), GroupElement::affine(3, 4));
  EXPECT_DOUBLE_EQ(g.params()[0], 7.0);
  EXPECT_DOUBLE_EQ(g.params()[1], 8.0);
  for (double y : {-2.0, 0.0, 0.5, 3.0}) EXPECT_DOUBLE_EQ(act_pointwise(g, y), 8.0 * y + 7.0);
}

TEST(GroupTest, ComposeTranslationInversePair) {
  EXPECT_EQ(compose(GroupElement::translation(2), GroupElement::translation(-2)).params()[0], 0.0);
}

TEST(GroupTest, ComposeRotationQuarterTurns) {
  const auto g = compose(GroupElement::rotation(kPi / 4), GroupElement::rotation(kPi / 4));
  EXPECT_NEAR(g.angle(), kPi / 2, 1e-15);
  // Matrix product on (1, 0).
  const auto twice = act_point2d(GroupElement::rotation(kPi / 4), act_point2d(GroupElement::rotation(kPi / 4), {1, 0}));
  const auto once = act_point2d(g, {1, 0});
  EXPECT_NEAR(once[0], twice[0], 1e-15);
  EXPECT_NEAR(once[1], twice[1], 1e-15);
  EXPECT_NEAR(once[0], 0.0, 1e-15);
  EXPECT_NEAR(once[1], 1.0, 1e-15);
}

TEST(GroupTest, ComposeRejectsFamilyMismatch) {
  EXPECT_THROW(compose(GroupElement::translation(1), GroupElement::affine(0, 1)), GroupError);
}

TEST(GroupTest, Inverse) {
  const auto inv = inverse(GroupElement::affine(3, 2));
  EXPECT_DOUBLE_EQ(inv.params()[0], -1.5);
  EXPECT_DOUBLE_EQ(inv.params()[1], 0.5);
  // Solving 2y + 3 = x for y.
  for (double x : {-1.0, 0.0, 4.0}) EXPECT_DOUBLE_EQ(act_pointwise(inv, x), (x - 3.0) / 2.0);
  EXPECT_EQ(inverse(GroupElement::translation(5)).params()[0], -5.0);
  EXPECT_EQ(inverse(GroupElement::rotation(0.7)).angle(), -0.7);
}

TEST(GroupTest, ActPointwise) {
  EXPECT_DOUBLE_EQ(act_pointwise(GroupElement::affine(2, 3), 1.0), 5.0);
  EXPECT_DOUBLE_EQ(act_pointwise(GroupElement::translation(0), 7.0), 7.0);
  EXPECT_DOUBLE_EQ(act_pointwise(GroupElement::affine(0, -1), 4.0), -4.0);
  EXPECT_THROW(act_pointwise(GroupElement::rotation(1.0), 1.0), GroupError);
}

TEST(GroupTest, ActPoint2d) {
  auto p = act_point2d(GroupElement::rotation(kPi / 2), {1, 0});
  EXPECT_NEAR(p[0], 0.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0, 1e-15);
  p = act_point2d(GroupElement::rotation(0.0), {0.3, -0.4});
  EXPECT_EQ(p[0], 0.3);
  EXPECT_EQ(p[1], -0.4);
  p = act_point2d(GroupElement::rotation(kPi), {1, 1});
  EXPECT_NEAR(p[0], -1.0, 1e-15);
  EXPECT_NEAR(p[1], -1.0, 1e-15);
  EXPECT_THROW(act_point2d(GroupElement::translation(1), {1, 0}), GroupError);
}

class GroupAxiomsTest : public ::testing::TestWithParam<GroupKind> {};

TEST_P(GroupAxiomsTest, HoldOnThousandRandomElements) {
  const GroupFamily family{GetParam()};
  std::mt19937_64 rng(20240611);
  for (int i = 0; i < 1000; ++i) {
    const auto g1 = sample_element(family, rng);
    const auto g2 = sample_element(family, rng);
    const auto g3 = sample_element(family, rng);
    ExpectParamsNear(compose(identity(family), g1), g1, 1e-9);
    ExpectParamsNear(compose(g1, identity(family)), g1, 1e-9);
    ExpectParamsNear(compose(g1, inverse(g1)), identity(family), 1e-9);
    ExpectParamsNear(compose(inverse(g1), g1), identity(family), 1e-9);
    ExpectParamsNear(compose(compose(g1, g2), g3), compose(g1, compose(g2, g3)), 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(AllFamilies, GroupAxiomsTest,
                         ::testing::Values(GroupKind::Translation, GroupKind::Affine, GroupKind::Rotation2D));

TEST(GroupTest, RotationPreservesRadius) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 1000; ++i) {
    const Point2 p{u(rng), u(rng)};
    const auto q = act_point2d(sample_element(GroupFamily::rotation2d(), rng), p);
    EXPECT_NEAR(std::hypot(q[0], q[1]), std::hypot(p[0], p[1]), 1e-12);
  }
}

TEST(GroupTest, IdentityComponentSamplingKeepsScalePositive) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i)
    EXPECT_GT(sample_element(GroupFamily::affine(), rng, ElementSampling::IdentityComponent).scale(), 0.0);
}

}  // namespace
}  // namespace foliate
