#include <gtest/gtest.h>

#include "widthlab/quadrature.hpp"
#include "widthlab/rng.hpp"
#include "widthlab/trig_basis.hpp"

using namespace widthlab;

TEST(TrigBasis, FrozenValues) {
  const std::vector<double> x{0.3, 0.1};
  EXPECT_NEAR(eval_T(MultiIndex{1, -2}, x), 0.437016024448821070799, 1e-15);
  EXPECT_NEAR(eval_T(MultiIndex{-1, 2}, x), 1.344997023927914653920, 1e-15);
  EXPECT_DOUBLE_EQ(eval_T(MultiIndex{0, 0}, x), 1.0);
  const std::vector<double> y{0.2, -0.7, 0.4};
  EXPECT_NEAR(eval_T_scaled(MultiIndex{0, 3, -1}, y, 0.5), 1.0, 1e-15);
}

TEST(TrigBasis, OrthonormalOnSmallBall) {
  const Grid g = tensor_grid(Measure::UniformCube, 2, 24);
  const auto ball = enumerate_ball(2, 2);
  for (const auto& K : ball) {
    for (const auto& J : ball) {
      const double ip = inner_product(basis_function(K), basis_function(J), g);
      EXPECT_NEAR(ip, K == J ? 1.0 : 0.0, 1e-12) << K.to_string() << J.to_string();
    }
  }
}

TEST(TrigBasis, SinCosRewrites) {
  Rng rng(4);
  for (const MultiIndex J : {MultiIndex{0, 0}, MultiIndex{1, -2}, MultiIndex{-1, 2}, MultiIndex{0, -3}}) {
    const std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double th = kPi * (J[0] * x[0] + J[1] * x[1]);
    const auto s = sin_in_basis(J);
    const auto c = cos_in_basis(J);
    EXPECT_NEAR(s.coeff * eval_T(s.index, x), kSqrt2 * std::sin(th), 1e-14);
    EXPECT_NEAR(c.coeff * eval_T(c.index, x), kSqrt2 * std::cos(th), 1e-14);
  }
}

TEST(TrigBasis, PartialDerivativeMatchesFiniteDifferences) {
  Rng rng(11);
  const auto ball = enumerate_ball(2, 2);
  const double h = 1e-3;
  for (const auto& K : ball) {
    for (int i = 0; i < 2; ++i) {
      for (int order = 1; order <= 3; ++order) {
        MultiIndex M = MultiIndex::zero(2);
        M[static_cast<std::size_t>(i)] = order;
        const DerivedTerm t = partial_derivative(K, M);
        const std::vector<double> x{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
        // central differences of the order-1 derivative are compared one level up
        MultiIndex M1 = M;
        --M1[static_cast<std::size_t>(i)];
        const DerivedTerm lower = partial_derivative(K, M1);
        auto g = [&](double dx) {
          std::vector<double> y = x;
          y[static_cast<std::size_t>(i)] += dx;
          return lower.coeff * eval_T(lower.index, y);
        };
        const double fd = (-g(2 * h) + 8 * g(h) - 8 * g(-h) + g(-2 * h)) / (12 * h);
        const double exact = t.coeff * eval_T(t.index, x);
        EXPECT_NEAR(fd, exact, 1e-6 * std::max(1.0, std::abs(exact))) << K.to_string() << " i=" << i << " m=" << order;
      }
    }
  }
}

TEST(TrigBasis, CosIndexFirstDerivativeSign) {
  // T_{(-1)} = sqrt2 cos(pi x), whose derivative is -pi T_{(1)}.
  const DerivedTerm t = partial_derivative(MultiIndex{-1}, MultiIndex{1});
  EXPECT_EQ(t.index, MultiIndex{1});
  EXPECT_NEAR(t.coeff, -kPi, 1e-15);
  const std::vector<double> x{0.3};
  EXPECT_NEAR(t.coeff * eval_T(t.index, x), -kSqrt2 * kPi * std::sin(kPi * 0.3), 1e-14);
}

TEST(TrigBasis, ZeroIndexDerivativeVanishes) {
  const DerivedTerm t = partial_derivative(MultiIndex{0, 0}, MultiIndex{1, 0});
  EXPECT_EQ(t.coeff, 0.0);
  const DerivedTerm id = partial_derivative(MultiIndex{2, 1}, MultiIndex{0, 0});
  EXPECT_EQ(id.coeff, 1.0);
  EXPECT_EQ(id.index, (MultiIndex{2, 1}));
}

TEST(TrigBasis, DerivativeInnerProduct) {
  EXPECT_NEAR(deriv_inner_product(MultiIndex{1, 2}, MultiIndex{1, 2}, MultiIndex{1, 1}), std::pow(kPi, 4) * 4.0, 1e-9);
  EXPECT_EQ(deriv_inner_product(MultiIndex{1, 2}, MultiIndex{2, 1}, MultiIndex{1, 1}), 0.0);
}

TEST(TrigBasis, LipschitzBound) {
  EXPECT_NEAR(lipschitz_bound(MultiIndex{3, 4}), kSqrt2 * kPi * 5.0, 1e-14);
  Rng rng(2);
  const MultiIndex K{1, -1};
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-1, 1)}, y{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double dist = std::hypot(x[0] - y[0], x[1] - y[1]);
    EXPECT_LE(std::abs(eval_T(K, x) - eval_T(K, y)), lipschitz_bound(K) * dist + 1e-12);
  }
}

TEST(TrigBasis, PolynomialStorageAndParseval) {
  TrigPolynomial P(2);
  P.add({1, 0}, 0.5).add({0, -1}, -2.0).add({1, 0}, -0.5);
  EXPECT_EQ(P.size(), 1u);
  EXPECT_EQ(P.coefficient({1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(parseval_norm(P), 2.0);
  EXPECT_DOUBLE_EQ(P.max_abs_coefficient(), 2.0);
  EXPECT_DOUBLE_EQ(P.degree_radius(), 1.0);
  const Grid g = tensor_grid(Measure::UniformCube, 2, 16);
  EXPECT_NEAR(l2_norm(as_function(P), g), 2.0, 1e-12);
  TrigPolynomial half(2, 0.5);
  half.add({1, 0}, 1.0);
  EXPECT_THROW(parseval_norm(half), Error);
  EXPECT_THROW(TrigPolynomial(2, 1.5), Error);
  EXPECT_THROW(eval_T(MultiIndex{1}, std::vector<double>{0.1, 0.2}), Error);
}
