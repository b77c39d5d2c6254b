#include <gtest/gtest.h>

#include <cmath>

#include "geodiff/normalize.hpp"
#include "test_util.hpp"

using namespace geodiff;
using geodiff::testing::max_abs_diff;
using geodiff::testing::random_field;
using geodiff::testing::random_stack;
using geodiff::testing::row_field;

TEST(NormalizeDepth, AnchorsMapToUnitRange) {
  const Field2D d = random_field(10, 10, 4, 1, 50);
  const NormalizedDepth n = normalize_depth(d);
  EXPECT_NEAR(percentile(n.depth, 2), -1.0, 1e-9);
  EXPECT_NEAR(percentile(n.depth, 98), 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(n.norm.d2, percentile(d, 2));
  EXPECT_DOUBLE_EQ(n.norm.d98, percentile(d, 98));
}

TEST(NormalizeDepth, Substitution) {
  const DepthNormalization norm{10.0, 20.0};
  const Field2D out = normalize_depth(row_field({10, 15, 20, 25}), norm);
  EXPECT_DOUBLE_EQ(out[0], -1.0);
  EXPECT_DOUBLE_EQ(out[1], 0.0);
  EXPECT_DOUBLE_EQ(out[2], 1.0);
  // Not clamped outside the anchors.
  EXPECT_DOUBLE_EQ(out[3], 2.0);
}

TEST(NormalizeDepth, AffineInvariant) {
  const Field2D d = random_field(12, 9, 6, 0.5, 4);
  const Field2D base = normalize_depth(d).depth;
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const double a = 0.01 + 100.0 * rng.uniform();
    const double b = -50.0 + 100.0 * rng.uniform();
    EXPECT_LE(max_abs_diff(normalize_depth(apply_affine(d, a, b)).depth, base), 1e-9);
  }
}

TEST(NormalizeDepth, DegenerateRange) {
  try {
    normalize_depth(Field2D(3, 3, 4.0));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_STREQ(e.what(), "degenerate depth range");
  }
  EXPECT_ANY_THROW(normalize_depth(row_field({1.0})));
}

TEST(DenormalizeDepth, InverseRoundTrip) {
  const DepthNormalization norm{2.0, 6.0};
  const Field2D out = denormalize_depth(row_field({0, -1, 1}), norm);
  EXPECT_DOUBLE_EQ(out[0], 4.0);
  EXPECT_DOUBLE_EQ(out[1], 2.0);
  EXPECT_DOUBLE_EQ(out[2], 6.0);
  const Field2D d = random_field(8, 8, 11, 0.1, 80);
  const NormalizedDepth n = normalize_depth(d);
  const Field2D back = denormalize_depth(n.depth, n.norm);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_LE(std::abs(back[i] - d[i]), 1e-12 * std::abs(d[i]));
}

TEST(Channels, ReplicateAndAverage) {
  const Field2D d = random_field(4, 5, 2);
  const FieldStack s = replicate_channels(d);
  ASSERT_EQ(s.channels(), 3);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(geodiff::testing::to_vector(s.plane(c)), geodiff::testing::to_vector(d));
  EXPECT_EQ(max_abs_diff(average_channels(s), d), 0.0);
  const FieldStack z = replicate_channels(Field2D(2, 2, 0.0));
  for (int c = 0; c < 3; ++c) {
    for (double v : z.plane(c).values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Channels, AverageMatchesOracle) {
  FieldStack s(std::vector<Field2D>{row_field({1}), row_field({2}), row_field({3})});
  EXPECT_DOUBLE_EQ(average_channels(s)[0], 2.0);
  const FieldStack r = random_stack(3, 6, 6, 9);
  const Field2D a = average_channels(r);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], (r.plane(0)[i] + r.plane(1)[i] + r.plane(2)[i]) / 3.0, 1e-15);
  }
  EXPECT_THROW(average_channels(random_stack(2, 2, 2, 1)), InvalidArgument);
}

TEST(NormalizeNormals, Examples) {
  FieldStack n(std::vector<Field2D>{row_field({0, 3, 0}), row_field({0, 4, 0}), row_field({2, 0, 0})});
  const NormalizedNormals out = normalize_normals(n);
  EXPECT_DOUBLE_EQ(out.normals.plane(2)[0], 1.0);
  EXPECT_DOUBLE_EQ(out.normals.plane(0)[1], 0.6);
  EXPECT_DOUBLE_EQ(out.normals.plane(1)[1], 0.8);
  // The zero vector becomes camera-facing and is counted.
  EXPECT_EQ(out.degenerate_pixels, 1u);
  EXPECT_EQ(out.normals.plane(0)[2], 0.0);
  EXPECT_EQ(out.normals.plane(1)[2], 0.0);
  EXPECT_EQ(out.normals.plane(2)[2], 1.0);
}

TEST(NormalizeNormals, Idempotent) {
  const FieldStack once = normalize_normals(random_stack(3, 7, 7, 5)).normals;
  for (std::size_t i = 0; i < once.pixels(); ++i) {
    const double x = once.plane(0)[i];
    const double y = once.plane(1)[i];
    const double z = once.plane(2)[i];
    EXPECT_NEAR(x * x + y * y + z * z, 1.0, 1e-12);
  }
  EXPECT_LE(max_abs_diff(normalize_normals(once).normals, once), 1e-12);
}
