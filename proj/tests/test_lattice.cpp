#include <gtest/gtest.h>

#include <cstdlib>

#include "widthlab/lattice.hpp"

using namespace widthlab;

namespace {

std::uint64_t box_count(double k, std::size_t d) {
  const std::int64_t R = radius_sq_bound(k);
  const int m = static_cast<int>(std::floor(k)) + 1;
  std::vector<int> v(d, -m);
  std::uint64_t n = 0;
  while (true) {
    std::int64_t s = 0;
    for (int x : v) s += static_cast<std::int64_t>(x) * x;
    if (s <= R) ++n;
    std::size_t i = 0;
    while (i < d && ++v[i] > m) v[i++] = -m;
    if (i == d) break;
  }
  return n;
}

}  // namespace

TEST(Lattice, FrozenCounts) {
  EXPECT_EQ(count_ball(0, 5), 1u);
  EXPECT_EQ(count_ball(1, 1), 3u);
  EXPECT_EQ(count_ball(1, 2), 5u);
  EXPECT_EQ(count_ball(2, 2), 13u);
  EXPECT_EQ(count_ball(2, 3), 33u);
  EXPECT_EQ(count_ball(3, 3), 123u);
  EXPECT_EQ(count_ball(1.5, 4), 33u);
  EXPECT_EQ(count_ball(2, 4), 89u);
  EXPECT_EQ(count_ball(2.5, 2), 21u);
  EXPECT_EQ(count_ball(5, 6), 84769u);
}

TEST(Lattice, IrrationalRadiusSnapsToIntegerSquare) {
  EXPECT_EQ(count_ball(std::sqrt(2.0), 3), 19u);
  EXPECT_EQ(radius_sq_bound(std::sqrt(3.0)), 3);
  EXPECT_EQ(radius_sq_bound(1.999), 3);
}

TEST(Lattice, CountMatchesBoxScan) {
  for (std::size_t d = 1; d <= 4; ++d) {
    for (double k : {0.0, 0.7, 1.0, 1.5, 2.0, 2.3, 3.0}) EXPECT_EQ(count_ball(k, d), box_count(k, d)) << k << " " << d;
  }
}

TEST(Lattice, EnumerationIsSortedUniqueAndComplete) {
  const auto ball = enumerate_ball(2, 3);
  ASSERT_EQ(ball.size(), count_ball(2, 3));
  for (std::size_t i = 1; i < ball.size(); ++i) EXPECT_LT(ball[i - 1], ball[i]);
  for (const auto& K : ball) EXPECT_TRUE(in_ball(K, 2));
}

TEST(Lattice, EnumerationRespectsCap) {
  EXPECT_THROW(enumerate_ball(3, 3, 100), Error);
  try {
    enumerate_ball(3, 3, 100);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CapExceeded);
  }
  EXPECT_EQ(enumerate_ball(3, 3, 123).size(), 123u);
}

TEST(Lattice, ClassifyBySignOfFirstNonzero) {
  EXPECT_EQ(classify(MultiIndex{0, 0}), IndexClass::Zero);
  EXPECT_EQ(classify(MultiIndex{0, 2, -1}), IndexClass::Sin);
  EXPECT_EQ(classify(MultiIndex{0, -2, 1}), IndexClass::Cos);
  EXPECT_EQ(classify(-MultiIndex{1, 0}), IndexClass::Cos);
}

TEST(Lattice, Norms) {
  const MultiIndex K{3, -4, 0};
  EXPECT_EQ(K.l2_norm_sq(), 25);
  EXPECT_DOUBLE_EQ(K.l2_norm(), 5.0);
  EXPECT_EQ(K.l1_norm(), 7);
  EXPECT_EQ(K.sum(), -1);
  EXPECT_EQ(K.to_string(), "(3,-4,0)");
}

TEST(Lattice, MonotoneInRadiusAndDimension) {
  for (std::size_t d = 1; d <= 6; ++d) {
    for (int k = 0; k < 5; ++k) {
      EXPECT_LE(count_ball(k, d), count_ball(k + 1, d));
      EXPECT_LE(count_ball(k, d), count_ball(k, d + 1));
    }
  }
}

TEST(Lattice, CapFromEnvironment) {
  ::setenv("WIDTHLAB_CAP", "50", 1);
  EXPECT_EQ(default_cap(), 50u);
  EXPECT_THROW(enumerate_ball(3, 3), Error);
  ::unsetenv("WIDTHLAB_CAP");
  EXPECT_EQ(enumerate_ball(3, 3).size(), 123u);
}

TEST(Lattice, ExponentEnvelopeNeedsUnitRadius) {
  EXPECT_THROW(exponent_envelope(0.5, 3), Error);
  EXPECT_GT(exponent_envelope(2, 3), 0.0);
}
