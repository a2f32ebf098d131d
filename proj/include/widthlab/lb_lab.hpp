#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "widthlab/error.hpp"
#include "widthlab/fitter.hpp"
#include "widthlab/lattice.hpp"
#include "widthlab/parallel.hpp"
#include "widthlab/quadrature.hpp"
#include "widthlab/relu_features.hpp"
#include "widthlab/rng.hpp"
#include "widthlab/trig_approx.hpp"
#include "widthlab/trig_basis.hpp"

namespace widthlab {

struct FunctionFamily {
  std::vector<FunctionHandle> members;
  std::vector<std::string> labels;
  bool declared_orthonormal = false;
  std::optional<double> kappa;

  std::size_t size() const { return members.size(); }
};

inline Eigen::MatrixXd gram_matrix(const FunctionFamily& family, const Grid& grid) {
  const Eigen::MatrixXd F = function_matrix(family.members, grid);
  Eigen::VectorXd w(F.rows());
  for (Eigen::Index i = 0; i < F.rows(); ++i) w[i] = grid.weight(static_cast<std::size_t>(i));
  return F.transpose() * w.asDiagonal() * F;
}

namespace detail {

inline double off_diagonal_norm(const Eigen::MatrixXd& gram) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    for (Eigen::Index j = 0; j < gram.cols(); ++j) {
      if (i != j) s += gram(i, j) * gram(i, j);
    }
  }
  return std::sqrt(s);
}

}  // namespace detail

/// Average coherence sqrt(sum_{i != j} <phi_i, phi_j>^2) of a unit-norm family.
inline double coherence(const FunctionFamily& family, const Grid& grid, double unit_tol = 1e-6) {
  const Eigen::MatrixXd gram = gram_matrix(family, grid);
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    require(std::abs(gram(i, i) - 1.0) <= unit_tol, ErrorCode::NotUnitNorm,
            "family member " + std::to_string(i) + " has squared norm " + std::to_string(gram(i, i)));
  }
  return detail::off_diagonal_norm(gram);
}

/// 1 - r (1 + kappa) / N; negative values mean the bound is vacuous.
inline double randict_bound(double r, double N, double kappa) {
  require(N >= 1.0 && r >= 0.0 && kappa >= 0.0, ErrorCode::ParameterOutOfRange, "randict_bound needs N >= 1, r >= 0, kappa >= 0");
  return 1.0 - r * (1.0 + kappa) / N;
}

struct ProjectionReport {
  std::vector<double> residuals;  // ||phi_i||^2 - ||Pi phi_i||^2, clipped at 0
  double mean_residual = 0.0;
  std::size_t r = 0;
  std::size_t N = 0;
  double bound = 0.0;
  double captured = 0.0;  // sum_i ||Pi phi_i||^2
};

namespace detail {

inline ProjectionReport projection_report(const Eigen::MatrixXd& G, const Eigen::MatrixXd& Phi, const Grid& grid,
                                          double kappa, double rcond) {
  const auto proj = project_columns(G, Phi, grid.weights(), rcond);
  ProjectionReport rep;
  rep.r = static_cast<std::size_t>(G.cols());
  rep.N = static_cast<std::size_t>(Phi.cols());
  for (Eigen::Index i = 0; i < Phi.cols(); ++i) {
    double norm2 = 0.0;
    for (Eigen::Index p = 0; p < Phi.rows(); ++p) norm2 += grid.weight(static_cast<std::size_t>(p)) * Phi(p, i) * Phi(p, i);
    const double res = std::max(0.0, proj.residuals[static_cast<std::size_t>(i)] * proj.residuals[static_cast<std::size_t>(i)]);
    rep.residuals.push_back(res);
    rep.captured += norm2 - res;
  }
  double s = 0.0;
  for (double v : rep.residuals) s += v;
  rep.mean_residual = rep.N ? s / static_cast<double>(rep.N) : 0.0;
  rep.bound = randict_bound(static_cast<double>(rep.r), static_cast<double>(std::max<std::size_t>(rep.N, 1)), kappa);
  return rep;
}

}  // namespace detail

/// Squared residuals of every family member against the span of the features.
/// An empty feature list leaves each residual at ||phi_i||^2.
inline ProjectionReport projection_residuals(std::span<const ReluFeature> features, const FunctionFamily& family,
                                             const Grid& grid, double rcond = kDefaultRcond) {
  return detail::projection_report(feature_matrix(features, grid), function_matrix(family.members, grid), grid,
                                   family.kappa.value_or(0.0), rcond);
}

/// Same, with arbitrary functions standing in for the features.
inline ProjectionReport projection_residuals(std::span<const FunctionHandle> pseudo_features,
                                             const FunctionFamily& family, const Grid& grid,
                                             double rcond = kDefaultRcond) {
  return detail::projection_report(function_matrix(pseudo_features, grid), function_matrix(family.members, grid), grid,
                                   family.kappa.value_or(0.0), rcond);
}

struct BoasBellman {
  double lhs = 0.0;  // sum_i <g, phi_i>^2
  double rhs = 0.0;  // ||g||^2 (max_i ||phi_i||^2 + kappa)
};

inline BoasBellman check_boas_bellman(const FunctionHandle& g, const FunctionFamily& family, const Grid& grid) {
  const Eigen::MatrixXd gram = gram_matrix(family, grid);
  const auto gv = sample_on(g, grid);
  BoasBellman out;
  double max_norm2 = 0.0;
  for (std::size_t i = 0; i < family.size(); ++i) {
    const double c = weighted_dot(gv, sample_on(family.members[i], grid), grid);
    out.lhs += c * c;
    max_norm2 = std::max(max_norm2, gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
  }
  out.rhs = weighted_dot(gv, gv, grid) * (max_norm2 + detail::off_diagonal_norm(gram));
  return out;
}

/// {T_K : K in the radius-k ball}.
inline FunctionFamily hard_family_ball(double k, std::size_t d, std::uint64_t cap = default_cap()) {
  FunctionFamily fam;
  for (const auto& K : enumerate_ball(k, d, cap)) {
    fam.members.push_back(basis_function(K));
    fam.labels.push_back(K.to_string());
  }
  fam.declared_orthonormal = true;
  fam.kappa = 0.0;
  return fam;
}

/// 0/1 indicator indices of all ell-subsets of {0..d-1}, in lexicographic subset order.
inline std::vector<MultiIndex> subset_indices(std::size_t ell, std::size_t d) {
  require(ell >= 1 && ell <= d, ErrorCode::ParameterOutOfRange, "subset size must satisfy 1 <= l <= d");
  std::vector<MultiIndex> out;
  std::vector<std::size_t> pick(ell);
  for (std::size_t i = 0; i < ell; ++i) pick[i] = i;
  while (true) {
    MultiIndex K = MultiIndex::zero(d);
    for (std::size_t i : pick) K[i] = 1;
    out.push_back(std::move(K));
    std::size_t i = ell;
    while (i > 0 && pick[i - 1] == d - ell + (i - 1)) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < ell; ++j) pick[j] = pick[j - 1] + 1;
  }
  return out;
}

inline std::string subset_label(const MultiIndex& K) {
  std::string s = "{";
  bool first = true;
  for (std::size_t i = 0; i < K.dim(); ++i) {
    if (K[i] == 0) continue;
    if (!first) s += ",";
    s += std::to_string(i + 1);
    first = false;
  }
  return s + "}";
}

/// {x -> sqrt2 sin(pi sum_{i in S} x_i) : |S| = ell}; each member is T_K for the indicator K of S.
inline FunctionFamily hard_family_symmetric(std::size_t ell, std::size_t d) {
  FunctionFamily fam;
  for (const auto& K : subset_indices(ell, d)) {
    fam.members.push_back(basis_function(K));
    fam.labels.push_back(subset_label(K));
  }
  fam.declared_orthonormal = true;
  fam.kappa = 0.0;
  return fam;
}

struct ExplicitHardFunction {
  FunctionHandle f;
  double lip_bound = 0.0;  // 4 pi eps sqrt(2 ell)
  MultiIndex index;        // f = 4 eps T_index
};

/// f(x) = 4 sqrt2 eps sin(pi sum_{i <= ell} x_i).
inline ExplicitHardFunction explicit_hard_function(double eps, std::size_t ell, std::size_t d) {
  require(ell >= 1 && ell <= d, ErrorCode::ParameterOutOfRange, "explicit hard function needs 1 <= l <= d");
  require(eps > 0.0, ErrorCode::ParameterOutOfRange, "eps must be positive");
  MultiIndex K = MultiIndex::zero(d);
  for (std::size_t i = 0; i < ell; ++i) K[i] = 1;
  FunctionHandle f{[eps, ell](std::span<const double> x) {
                     double s = 0.0;
                     for (std::size_t i = 0; i < ell; ++i) s += x[i];
                     return 4.0 * kSqrt2 * eps * std::sin(kPi * s);
                   },
                   d};
  return {std::move(f), 4.0 * kPi * eps * std::sqrt(2.0 * static_cast<double>(ell)), std::move(K)};
}

/// Largest |f(x) - f(y)| / ||x - y|| over random pairs in the cube.
inline double sampled_lipschitz_quotient(const FunctionHandle& f, std::size_t pairs, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(f.dim), y(f.dim);
  double best = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    double dist2 = 0.0;
    for (std::size_t i = 0; i < f.dim; ++i) {
      x[i] = rng.uniform(-1.0, 1.0);
      y[i] = rng.uniform(-1.0, 1.0);
      dist2 += (x[i] - y[i]) * (x[i] - y[i]);
    }
    if (dist2 == 0.0) continue;
    best = std::max(best, std::abs(f(x) - f(y)) / std::sqrt(dist2));
  }
  return best;
}

struct LbParameters {
  std::size_t ell = 0;
  double k = 0.0;  // non-explicit radius L / (18 eps)
  bool degenerate = false;
};

/// ell = min(ceil(d/2), floor(L^2 / (32 pi^2 eps^2))) and k = L / (18 eps).
inline LbParameters lb_parameters(double L, double eps, std::size_t d) {
  require(L > 0.0 && eps > 0.0 && d >= 1, ErrorCode::ParameterOutOfRange, "lb_parameters needs L, eps > 0 and d >= 1");
  const double raw = std::floor(L * L / (32.0 * kPi * kPi * eps * eps));
  const std::size_t half = (d + 1) / 2;
  LbParameters p;
  p.ell = raw >= static_cast<double>(half) ? half : static_cast<std::size_t>(raw);
  p.k = L / (18.0 * eps);
  p.degenerate = p.ell == 0;
  return p;
}

struct SobolevLbParameters {
  double k = 0.0;
  std::size_t ell = 0;
  bool degenerate = false;
  double max_norm = 0.0;  // largest ||4 eps T_K||_{H^s} over the certified indices
  std::size_t certified = 0;
};

/// k = gamma^{1/s} / (pi 4^{1/s} eps^{1/s} (s+1)^{1/(2s)}) and
/// ell = min(ceil(d/2), floor(gamma^{2/s} / (pi^2 16^{1/s} eps^{2/s} (s+1)^{1/s}))).
/// Certifies ||4 eps T_K||_{H^s} <= gamma for the explicit index and, when the
/// ball has at most `ball_limit` points, for every K with ||K|| <= k.
inline SobolevLbParameters sobolev_lb_parameters(double gamma, double eps, int s, std::size_t d,
                                                 std::uint64_t ball_limit = 100000) {
  require(s >= 1 && d >= 1, ErrorCode::ParameterOutOfRange, "sobolev_lb_parameters needs s >= 1 and d >= 1");
  require(gamma > 0.0 && eps > 0.0, ErrorCode::ParameterOutOfRange, "gamma and eps must be positive");
  const double sd = static_cast<double>(s);
  require(gamma * gamma / (eps * eps) >= 16.0 * (sd + 1.0), ErrorCode::ParameterOutOfRange,
          "requires gamma^2 / eps^2 >= 16 (s + 1)");
  SobolevLbParameters p;
  p.k = std::pow(gamma, 1.0 / sd) / (kPi * std::pow(4.0, 1.0 / sd) * std::pow(eps, 1.0 / sd) * std::pow(sd + 1.0, 0.5 / sd));
  const double raw = std::floor(std::pow(gamma, 2.0 / sd) /
                                (kPi * kPi * std::pow(16.0, 1.0 / sd) * std::pow(eps, 2.0 / sd) * std::pow(sd + 1.0, 1.0 / sd)));
  const std::size_t half = (d + 1) / 2;
  p.ell = raw >= static_cast<double>(half) ? half : static_cast<std::size_t>(raw);
  p.degenerate = p.ell == 0;

  auto certify = [&](const MultiIndex& K) {
    TrigPolynomial f(d);
    f.add(K, 4.0 * eps);
    const double norm = sobolev_norm_from_coeffs(f, s);
    require(norm <= gamma * (1.0 + 1e-12), ErrorCode::NumericalFailure,
            "Sobolev norm of 4 eps T_" + K.to_string() + " exceeds gamma");
    p.max_norm = std::max(p.max_norm, norm);
    ++p.certified;
  };
  if (p.ell > 0) {
    MultiIndex K = MultiIndex::zero(d);
    for (std::size_t i = 0; i < p.ell; ++i) K[i] = 1;
    certify(K);
  }
  if (count_ball(p.k, d) <= ball_limit) {
    for (const auto& K : enumerate_ball(p.k, d)) certify(K);
  }
  return p;
}

/// Greedy farthest-point choice of N unit directions, measuring separation by
/// |<u, v>| since v and -v give the same member up to sign.
inline std::vector<std::vector<double>> greedy_sphere_packing(std::size_t N, std::size_t d, std::uint64_t seed,
                                                              double max_abs_cos = 0.99, std::size_t pool = 0) {
  require(N >= 1 && d >= 1, ErrorCode::ParameterOutOfRange, "packing needs N, d >= 1");
  if (pool == 0) pool = std::max<std::size_t>(1024, 64 * N);
  require(N <= pool, ErrorCode::ParameterOutOfRange, "packing pool smaller than N");
  Rng rng(seed);
  std::vector<std::vector<double>> cand(pool, std::vector<double>(d));
  for (auto& v : cand) {
    double n2 = 0.0;
    while (n2 == 0.0) {
      n2 = 0.0;
      for (double& c : v) {
        c = rng.normal();
        n2 += c * c;
      }
    }
    const double n = std::sqrt(n2);
    for (double& c : v) c /= n;
  }
  auto abs_cos = [d](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
    return std::abs(s);
  };
  std::vector<std::vector<double>> chosen{cand[0]};
  std::vector<double> closest(pool);
  for (std::size_t c = 0; c < pool; ++c) closest[c] = abs_cos(cand[c], chosen[0]);
  while (chosen.size() < N) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < pool; ++c) {
      if (closest[c] < closest[best]) best = c;
    }
    require(closest[best] <= max_abs_cos, ErrorCode::PackingFailed,
            "could not place " + std::to_string(N) + " directions with |cos| <= " + std::to_string(max_abs_cos));
    chosen.push_back(cand[best]);
    for (std::size_t c = 0; c < pool; ++c) closest[c] = std::max(closest[c], abs_cos(cand[c], cand[best]));
  }
  return chosen;
}

/// Members sin(L <v, x>) / c_v with c_v measured on the Gaussian grid; kappa is measured.
inline FunctionFamily gaussian_hard_family(double L, const std::vector<std::vector<double>>& directions, const Grid& grid) {
  require(grid.measure() == Measure::Gaussian, ErrorCode::WrongMeasure, "Gaussian family needs a Gaussian grid");
  require(L > 0.0 && !directions.empty(), ErrorCode::ParameterOutOfRange, "need L > 0 and at least one direction");
  FunctionFamily fam;
  for (const auto& v : directions) {
    detail::check_dims(v.size(), grid.dim(), "gaussian_hard_family");
    FunctionHandle raw{[v, L](std::span<const double> x) {
                         double s = 0.0;
                         for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * x[i];
                         return std::sin(L * s);
                       },
                       v.size()};
    const double c = l2_norm(raw, grid);
    require(c > 1e-12, ErrorCode::NumericalFailure, "family member has vanishing norm on the grid");
    fam.members.push_back({[raw, c](std::span<const double> x) { return raw(x) / c; }, v.size()});
    std::string label = "(";
    for (std::size_t i = 0; i < v.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s%.6g", i ? "," : "", v[i]);
      label += buf;
    }
    fam.labels.push_back(label + ")");
  }
  fam.kappa = coherence(fam, grid);
  return fam;
}

inline FunctionFamily gaussian_hard_family(double L, std::size_t N, std::size_t d, std::uint64_t seed, const Grid& grid,
                                           double max_abs_cos = 0.99, std::uint64_t cap = default_cap()) {
  require(N <= cap, ErrorCode::CapExceeded, "family size exceeds cap");
  return gaussian_hard_family(L, greedy_sphere_packing(N, d, seed, max_abs_cos), grid);
}

/// Trial-level projection residuals of a family against r random features.
struct ProjectionExperiment {
  std::size_t r = 0;
  std::size_t N = 0;
  std::size_t trials = 0;
  double kappa = 0.0;
  double bound = 0.0;
  std::vector<std::vector<double>> residuals;  // [trial][member]
  std::vector<double> member_means;
  double mean_residual = 0.0;     // mean over trials of the per-trial mean residual
  double mean_std_error = 0.0;
  double max_member_z = 0.0;      // largest |z| of member-minus-average paired differences
  double max_captured = 0.0;      // largest per-trial sum ||Pi phi_i||^2
};

inline ProjectionExperiment run_projection_experiment(const FunctionFamily& family, const ReluParamDist& dist,
                                                      std::size_t r, std::size_t trials, const Grid& grid,
                                                      std::uint64_t seed, unsigned threads = 1,
                                                      double rcond = kDefaultRcond) {
  require(trials >= 1 && family.size() >= 1, ErrorCode::ParameterOutOfRange, "need trials >= 1 and a nonempty family");
  detail::check_dims(dist.dim(), grid.dim(), "run_projection_experiment");
  const Eigen::MatrixXd Phi = function_matrix(family.members, grid);
  const double kappa = family.kappa.value_or(0.0);

  ProjectionExperiment ex;
  ex.r = r;
  ex.N = family.size();
  ex.trials = trials;
  ex.kappa = kappa;
  ex.bound = randict_bound(static_cast<double>(r), static_cast<double>(ex.N), kappa);
  ex.residuals.resize(trials);
  std::vector<double> captured(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    Rng rng = trial_rng(seed, t);
    const auto features = dist.sample(rng, r);
    const auto rep = detail::projection_report(feature_matrix(features, grid), Phi, grid, kappa, rcond);
    ex.residuals[t] = rep.residuals;
    captured[t] = rep.captured;
  });

  const double T = static_cast<double>(trials);
  const std::size_t N = ex.N;
  ex.member_means.assign(N, 0.0);
  std::vector<double> trial_means(trials, 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < N; ++i) {
      ex.member_means[i] += ex.residuals[t][i] / T;
      trial_means[t] += ex.residuals[t][i] / static_cast<double>(N);
    }
    ex.max_captured = std::max(ex.max_captured, captured[t]);
  }
  for (double m : trial_means) ex.mean_residual += m / T;
  if (trials > 1) {
    double var = 0.0;
    for (double m : trial_means) var += (m - ex.mean_residual) * (m - ex.mean_residual);
    ex.mean_std_error = std::sqrt(var / (T - 1.0) / T);
  }

  if (trials > 1 && N > 1) {
    for (std::size_t i = 0; i < N; ++i) {
      double mean = 0.0, var = 0.0;
      std::vector<double> diff(trials);
      for (std::size_t t = 0; t < trials; ++t) {
        diff[t] = ex.residuals[t][i] - trial_means[t];
        mean += diff[t] / T;
      }
      for (double v : diff) var += (v - mean) * (v - mean);
      const double se = std::sqrt(var / (T - 1.0) / T);
      const double z = se > 0.0 ? mean / se : (std::abs(mean) > 1e-12 ? std::numeric_limits<double>::infinity() : 0.0);
      ex.max_member_z = std::max(ex.max_member_z, std::abs(z));
    }
  }
  return ex;
}

}  // namespace widthlab
