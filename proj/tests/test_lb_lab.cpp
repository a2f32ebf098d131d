#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <optional>
#include <set>

#include "widthlab/lb_lab.hpp"

using namespace widthlab;

namespace {

std::optional<ErrorCode> code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST(LbLab, CoherenceOfOrthonormalFamily) {
  const Grid g = tensor_grid(Measure::UniformCube, 2, 20);
  EXPECT_NEAR(coherence(hard_family_ball(2, 2), g), 0.0, 1e-12);
}

TEST(LbLab, CoherenceOfDuplicates) {
  const Grid g = tensor_grid(Measure::UniformCube, 1, 20);
  FunctionFamily fam;
  fam.members = {basis_function({1}), basis_function({1})};
  EXPECT_NEAR(coherence(fam, g), std::sqrt(2.0), 1e-12);
  fam.members = {constant_function(2.0, 1)};
  EXPECT_EQ(code_of([&] { coherence(fam, g); }), ErrorCode::NotUnitNorm);
}

TEST(LbLab, RandictBound) {
  EXPECT_DOUBLE_EQ(randict_bound(0, 10, 0), 1.0);
  EXPECT_DOUBLE_EQ(randict_bound(10, 10, 0), 0.0);
  EXPECT_DOUBLE_EQ(randict_bound(4, 16, 0), 0.75);
  EXPECT_DOUBLE_EQ(randict_bound(4, 16, 1), 0.5);
  EXPECT_LT(randict_bound(20, 10, 0), 0.0);
}

TEST(LbLab, EmptySpanKeepsFullNorm) {
  const Grid g = tensor_grid(Measure::UniformCube, 2, 20);
  const auto fam = hard_family_ball(1, 2);
  const auto rep = projection_residuals(std::span<const ReluFeature>{}, fam, g);
  ASSERT_EQ(rep.residuals.size(), 5u);
  for (double v : rep.residuals) EXPECT_NEAR(v, 1.0, 1e-12);
  EXPECT_NEAR(rep.bound, 1.0, 0.0);
}

TEST(LbLab, PseudoFeatureCapturesMember) {
  const Grid g = tensor_grid(Measure::UniformCube, 2, 20);
  const auto fam = hard_family_ball(1, 2);
  const std::vector<FunctionHandle> pseudo{fam.members[1]};
  const auto rep = projection_residuals(pseudo, fam, g);
  for (std::size_t i = 0; i < fam.size(); ++i) EXPECT_NEAR(rep.residuals[i], i == 1 ? 0.0 : 1.0, 1e-10);
  EXPECT_NEAR(rep.captured, 1.0, 1e-10);
  EXPECT_NEAR(rep.mean_residual, 0.8, 1e-10);
  EXPECT_NEAR(rep.bound, 0.8, 1e-12);
}

TEST(LbLab, MeanResidualAboveBound) {
  const Grid g = tensor_grid(Measure::UniformCube, 2, 12);
  const auto fam = hard_family_ball(2, 2);
  Rng rng(4);
  for (std::size_t r = 1; r <= 6; ++r) {
    const auto feats = ReluParamDist::lattice(2, 2).sample(rng, r);
    const auto rep = projection_residuals(feats, fam, g);
    EXPECT_GE(rep.mean_residual, rep.bound - 1e-10);
  }
}

TEST(LbLab, BoasBellman) {
  const Grid g = tensor_grid(Measure::UniformCube, 2, 20);
  const auto fam = hard_family_ball(2, 2);
  const ReluFeature relu(0.2, {0.6, -0.8});
  const FunctionHandle gf{[relu](std::span<const double> x) { return relu(x); }, 2};
  const auto bb = check_boas_bellman(gf, fam, g);
  EXPECT_LE(bb.lhs, bb.rhs + 1e-12);
  EXPECT_GT(bb.lhs, 0.0);
}

TEST(LbLab, BallFamilies) {
  EXPECT_EQ(hard_family_ball(0, 3).size(), 1u);
  EXPECT_EQ(hard_family_ball(1, 2).size(), 5u);
  EXPECT_EQ(hard_family_ball(2, 2).size(), 13u);
}

TEST(LbLab, SymmetricFamily) {
  const auto idx = subset_indices(2, 4);
  ASSERT_EQ(idx.size(), 6u);
  EXPECT_EQ(idx.front(), MultiIndex({1, 1, 0, 0}));
  EXPECT_EQ(idx.back(), MultiIndex({0, 0, 1, 1}));
  EXPECT_EQ(subset_label(idx.front()), "{1,2}");
  EXPECT_EQ(subset_label(idx.back()), "{3,4}");

  const auto fam = hard_family_symmetric(2, 4);
  EXPECT_EQ(fam.size(), 6u);
  const Grid g = tensor_grid(Measure::UniformCube, 4, 12);
  EXPECT_NEAR(coherence(fam, g), 0.0, 1e-12);

  // closed under coordinate permutations
  std::set<MultiIndex> set(idx.begin(), idx.end());
  for (const auto& K : idx) {
    MultiIndex P = K;
    std::swap(P[0], P[3]);
    EXPECT_TRUE(set.count(P));
  }
  EXPECT_EQ(code_of([] { subset_indices(5, 4); }), ErrorCode::ParameterOutOfRange);
}

TEST(LbLab, ExplicitHardFunction) {
  const auto h = explicit_hard_function(0.25, 1, 3);
  EXPECT_NEAR(h.lip_bound, 4 * kPi * std::sqrt(2.0) * 0.25, 1e-14);
  const Grid g = tensor_grid(Measure::UniformCube, 3, 16);
  EXPECT_NEAR(l2_norm(h.f, g), 4 * 0.25, 1e-12);
  EXPECT_NEAR(std::abs(inner_product(h.f, basis_function(h.index), g)), 1.0, 1e-12);
  EXPECT_LE(sampled_lipschitz_quotient(h.f, 5000, 1), h.lip_bound);

  const auto h2 = explicit_hard_function(0.1, 2, 4);
  EXPECT_NEAR(h2.lip_bound, 4 * kPi * 0.1 * 2.0, 1e-14);
  EXPECT_LE(sampled_lipschitz_quotient(h2.f, 5000, 2), h2.lip_bound);
}

TEST(LbLab, LipschitzParameters) {
  auto p = lb_parameters(18, 1, 4);
  EXPECT_EQ(p.ell, 1u);
  EXPECT_DOUBLE_EQ(p.k, 1.0);
  EXPECT_FALSE(p.degenerate);
  p = lb_parameters(1, 1, 100);
  EXPECT_EQ(p.ell, 0u);
  EXPECT_TRUE(p.degenerate);
  p = lb_parameters(1000, 1, 5);
  EXPECT_EQ(p.ell, 3u);
}

TEST(LbLab, SobolevParameters) {
  auto p = sobolev_lb_parameters(8, 1, 1, 3);
  EXPECT_NEAR(p.k, 0.450158158078553, 1e-14);
  EXPECT_LE(p.max_norm, 8.0);
  EXPECT_GE(p.certified, 1u);
  EXPECT_NO_THROW(sobolev_lb_parameters(std::sqrt(32.0), 1, 1, 2));
  EXPECT_EQ(code_of([] { sobolev_lb_parameters(std::sqrt(31.0), 1, 1, 2); }), ErrorCode::ParameterOutOfRange);
  p = sobolev_lb_parameters(200, 0.5, 2, 4);
  EXPECT_LE(p.max_norm, 200.0 * (1 + 1e-12));
}

TEST(LbLab, GaussianFamily) {
  const Grid g = tensor_grid(Measure::Gaussian, 2, 30);
  const auto one = gaussian_hard_family(2.0, 1, 2, 5, g);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_NEAR(*one.kappa, 0.0, 1e-12);

  const auto axes = gaussian_hard_family(2.0, {{1.0, 0.0}, {0.0, 1.0}}, g);
  EXPECT_LE(*axes.kappa, 1e-6);

  const auto many = gaussian_hard_family(2.0, 6, 2, 5, g);
  EXPECT_EQ(many.size(), 6u);
  EXPECT_GT(*many.kappa, 0.0);
  EXPECT_LT(randict_bound(3, 6, *many.kappa), randict_bound(3, 6, 0));

  const Grid cube = tensor_grid(Measure::UniformCube, 2, 20);
  EXPECT_EQ(code_of([&] { gaussian_hard_family(2.0, 2, 2, 5, cube); }), ErrorCode::WrongMeasure);
}

TEST(LbLab, PackingSeparation) {
  const auto dirs = greedy_sphere_packing(20, 3, 8);
  ASSERT_EQ(dirs.size(), 20u);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    double n2 = 0.0;
    for (double v : dirs[i]) n2 += v * v;
    EXPECT_NEAR(n2, 1.0, 1e-12);
    for (std::size_t j = 0; j < i; ++j) {
      double c = 0.0;
      for (std::size_t a = 0; a < 3; ++a) c += dirs[i][a] * dirs[j][a];
      EXPECT_LE(std::abs(c), 0.99);
    }
  }
  EXPECT_EQ(code_of([] { greedy_sphere_packing(50, 1, 8); }), ErrorCode::PackingFailed);
}

TEST(LbLab, ProjectionExperimentIsSymmetric) {
  const Grid g = tensor_grid(Measure::UniformCube, 4, 6);
  const auto fam = hard_family_symmetric(2, 4);
  const auto ex = run_projection_experiment(fam, ReluParamDist::lattice(2, 4), 2, 200, g, 17);
  EXPECT_EQ(ex.N, 6u);
  EXPECT_EQ(ex.residuals.size(), 200u);
  EXPECT_GE(ex.mean_residual, ex.bound);
  EXPECT_LE(ex.max_member_z, 4.0);
  const auto again = run_projection_experiment(fam, ReluParamDist::lattice(2, 4), 2, 200, g, 17, 3);
  EXPECT_EQ(ex.residuals, again.residuals);
}
