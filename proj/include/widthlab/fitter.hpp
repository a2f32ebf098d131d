#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "widthlab/error.hpp"
#include "widthlab/network.hpp"
#include "widthlab/parallel.hpp"
#include "widthlab/quadrature.hpp"
#include "widthlab/relu_features.hpp"
#include "widthlab/rng.hpp"

namespace widthlab {

inline constexpr double kDefaultRcond = 1e-10;

/// Least-squares fit of several targets onto one set of sampled columns.
struct SpanProjection {
  Eigen::MatrixXd coefficients;   // columns x targets
  std::vector<double> residuals;  // weighted L2 residual norm per target
  Eigen::Index rank = 0;
};

/// Solves min_c sum_i w_i (G c - y)_i^2 for every column y of Y through a
/// truncated SVD of diag(sqrt w) G. Zero columns in G give zero coefficients.
inline SpanProjection project_columns(const Eigen::MatrixXd& G, const Eigen::MatrixXd& Y,
                                      std::span<const double> weights, double rcond = kDefaultRcond) {
  require(G.rows() == Y.rows() && static_cast<std::size_t>(G.rows()) == weights.size(),
          ErrorCode::DimensionMismatch, "design, targets and weights disagree in length");
  const Eigen::Index n = G.rows(), r = G.cols(), m = Y.cols();
  Eigen::VectorXd sw(n);
  for (Eigen::Index i = 0; i < n; ++i) sw[i] = std::sqrt(weights[static_cast<std::size_t>(i)]);

  SpanProjection out;
  out.coefficients = Eigen::MatrixXd::Zero(r, m);
  const Eigen::MatrixXd B = sw.asDiagonal() * Y;
  Eigen::MatrixXd fitted = Eigen::MatrixXd::Zero(n, m);
  if (r > 0) {
    const Eigen::MatrixXd A = sw.asDiagonal() * G;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double cutoff = s.size() > 0 ? rcond * s[0] : 0.0;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      if (s[j] > cutoff && s[j] > 0.0) {
        inv[j] = 1.0 / s[j];
        ++out.rank;
      }
    }
    out.coefficients = svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * B);
    fitted = A * out.coefficients;
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    const double e = (B.col(j) - fitted.col(j)).norm();
    require(std::isfinite(e), ErrorCode::NumericalFailure, "least-squares residual is not finite");
    out.residuals.push_back(e);
  }
  return out;
}

/// Feature values at every grid node, one column per feature.
inline Eigen::MatrixXd feature_matrix(std::span<const ReluFeature> features, const Grid& grid) {
  Eigen::MatrixXd G(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(features.size()));
  for (std::size_t j = 0; j < features.size(); ++j) {
    detail::check_dims(features[j].dim(), grid.dim(), "feature_matrix");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      G(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[j](grid.node(i));
    }
  }
  return G;
}

inline Eigen::MatrixXd function_matrix(std::span<const FunctionHandle> fns, const Grid& grid) {
  Eigen::MatrixXd G(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(fns.size()));
  for (std::size_t j = 0; j < fns.size(); ++j) {
    const auto v = sample_on(fns[j], grid);
    G.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  return G;
}

/// Best approximation of f in the span of the features, measured on the grid.
inline FittedSpan fit_span(std::span<const ReluFeature> features, const FunctionHandle& f, const Grid& grid,
                           double rcond = kDefaultRcond) {
  require(!features.empty(), ErrorCode::EmptyFeatureList, "fit_span needs at least one feature");
  const auto fv = sample_on(f, grid);
  const auto proj = project_columns(feature_matrix(features, grid),
                                    Eigen::Map<const Eigen::VectorXd>(fv.data(), static_cast<Eigen::Index>(fv.size())),
                                    grid.weights(), rcond);
  FittedSpan out;
  out.features.assign(features.begin(), features.end());
  out.coefficients.assign(proj.coefficients.data(), proj.coefficients.data() + proj.coefficients.rows());
  out.l2_error = proj.residuals[0];
  out.grid_id = grid.spec().id();
  return out;
}

/// Coefficients and residual for an arbitrary list of spanning functions.
struct SpanFit {
  std::vector<double> coefficients;
  double l2_error = 0.0;
  Eigen::Index rank = 0;
};

inline SpanFit fit_span(std::span<const FunctionHandle> fns, const FunctionHandle& f, const Grid& grid,
                        double rcond = kDefaultRcond) {
  require(!fns.empty(), ErrorCode::EmptyFeatureList, "fit_span needs at least one function");
  const auto fv = sample_on(f, grid);
  const auto proj = project_columns(function_matrix(fns, grid),
                                    Eigen::Map<const Eigen::VectorXd>(fv.data(), static_cast<Eigen::Index>(fv.size())),
                                    grid.weights(), rcond);
  return {std::vector<double>(proj.coefficients.data(), proj.coefficients.data() + proj.coefficients.rows()),
          proj.residuals[0], proj.rank};
}

struct WilsonInterval {
  double lo = 0.0;
  double hi = 1.0;
};

inline WilsonInterval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054) {
  require(trials >= 1 && successes <= trials, ErrorCode::ParameterOutOfRange, "wilson_interval needs 0 <= s <= n, n >= 1");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {successes == 0 ? 0.0 : std::max(0.0, center - half), successes == trials ? 1.0 : std::min(1.0, center + half)};
}

struct SuccessEstimate {
  double probability = 0.0;
  WilsonInterval ci;
  std::size_t successes = 0;
  std::size_t trials = 0;
  std::vector<double> residuals;  // per trial
};

namespace detail {

inline SuccessEstimate tally(std::vector<double> residuals, double eps, double f_norm) {
  SuccessEstimate est;
  est.trials = residuals.size();
  for (double e : residuals) {
    if (e <= eps || f_norm <= eps) ++est.successes;
  }
  est.probability = static_cast<double>(est.successes) / static_cast<double>(est.trials);
  est.ci = wilson_interval(est.successes, est.trials);
  est.residuals = std::move(residuals);
  return est;
}

inline double grid_norm(std::span<const double> fv, const Grid& grid) { return std::sqrt(weighted_dot(fv, fv, grid)); }

// Residual of f against the first r features drawn from trial stream t.
inline double trial_residual(std::span<const double> fv, const ReluParamDist& dist, std::size_t r, std::uint64_t seed,
                             std::size_t t, const Grid& grid, double rcond) {
  Rng rng = trial_rng(seed, t);
  const auto features = dist.sample(rng, r);
  const auto proj = project_columns(feature_matrix(features, grid),
                                    Eigen::Map<const Eigen::VectorXd>(fv.data(), static_cast<Eigen::Index>(fv.size())),
                                    grid.weights(), rcond);
  return proj.residuals[0];
}

}  // namespace detail

/// Fraction of trials whose fitted span reaches error eps. Trial t draws its
/// features from trial_rng(seed, t), so the width-r draw is a prefix of the
/// width-(r+1) draw.
inline SuccessEstimate success_probability(const FunctionHandle& f, double eps, const ReluParamDist& dist,
                                           std::size_t r, std::size_t trials, const Grid& grid, std::uint64_t seed,
                                           unsigned threads = 1, double rcond = kDefaultRcond) {
  require(trials >= 1, ErrorCode::ParameterOutOfRange, "trials must be >= 1");
  require(r >= 1, ErrorCode::ParameterOutOfRange, "width must be >= 1");
  require(eps >= 0.0, ErrorCode::ParameterOutOfRange, "eps must be >= 0");
  detail::check_dims(dist.dim(), grid.dim(), "success_probability");
  const auto fv = sample_on(f, grid);
  std::vector<double> res(trials);
  parallel_for(trials, threads, [&](std::size_t t) { res[t] = detail::trial_residual(fv, dist, r, seed, t, grid, rcond); });
  return detail::tally(std::move(res), eps, detail::grid_norm(fv, grid));
}

/// Residuals of one trial's nested spans at each width in `widths` (ascending).
/// A running minimum removes rounding-level increases.
inline std::vector<double> coupled_residual_curve(const FunctionHandle& f, const ReluParamDist& dist,
                                                  std::span<const std::size_t> widths, std::uint64_t seed,
                                                  std::size_t trial, const Grid& grid, double rcond = kDefaultRcond) {
  require(!widths.empty() && std::is_sorted(widths.begin(), widths.end()) && widths.front() >= 1,
          ErrorCode::ParameterOutOfRange, "widths must be ascending and >= 1");
  const auto fv = sample_on(f, grid);
  const Eigen::Map<const Eigen::VectorXd> y(fv.data(), static_cast<Eigen::Index>(fv.size()));
  Rng rng = trial_rng(seed, trial);
  const auto features = dist.sample(rng, widths.back());
  const Eigen::MatrixXd G = feature_matrix(features, grid);
  std::vector<double> out;
  double best = detail::grid_norm(fv, grid);
  for (std::size_t r : widths) {
    const auto proj = project_columns(G.leftCols(static_cast<Eigen::Index>(r)), y, grid.weights(), rcond);
    best = std::min(best, proj.residuals[0]);
    out.push_back(best);
  }
  return out;
}

struct TracePoint {
  std::size_t r = 0;
  double success_prob = 0.0;
  WilsonInterval ci;
};

struct MinWidthEstimate {
  std::size_t r_hat = 1;
  double success_prob_at_r_hat = 0.0;
  std::size_t trials = 0;
  double eps = 0.0;
  double delta = 0.0;
  std::vector<TracePoint> search_trace;  // ascending in r
};

/// Smallest tested width whose success probability reaches 1 - delta: doubling
/// from r = 1, then bisection between the last failure and the first success.
/// Per-trial residuals are smoothed by a running minimum over tested widths.
inline MinWidthEstimate estimate_minwidth(const FunctionHandle& f, double eps, double delta, const ReluParamDist& dist,
                                          const Grid& grid, std::size_t trials, std::size_t r_max, std::uint64_t seed,
                                          unsigned threads = 1, double rcond = kDefaultRcond) {
  require(eps >= 0.0, ErrorCode::ParameterOutOfRange, "eps must be >= 0");
  require(delta >= 0.0 && delta < 1.0, ErrorCode::ParameterOutOfRange, "delta must lie in [0, 1)");
  require(trials >= 1 && r_max >= 1, ErrorCode::ParameterOutOfRange, "trials and r_max must be >= 1");
  detail::check_dims(dist.dim(), grid.dim(), "estimate_minwidth");
  const auto fv = sample_on(f, grid);
  const double f_norm = detail::grid_norm(fv, grid);

  std::map<std::size_t, std::vector<double>> raw;
  auto smoothed = [&](std::size_t r) {
    std::vector<double> res(trials, f_norm);
    for (const auto& [w, v] : raw) {
      if (w > r) break;
      for (std::size_t t = 0; t < trials; ++t) res[t] = std::min(res[t], v[t]);
    }
    return res;
  };
  auto evaluate = [&](std::size_t r) {
    auto& slot = raw[r];
    if (slot.empty()) {
      slot.resize(trials);
      parallel_for(trials, threads,
                   [&](std::size_t t) { slot[t] = detail::trial_residual(fv, dist, r, seed, t, grid, rcond); });
    }
    return detail::tally(smoothed(r), eps, f_norm).probability;
  };
  const double target = 1.0 - delta;

  std::size_t lo = 0, r = 1;
  while (evaluate(r) < target) {
    lo = r;
    require(r < r_max, ErrorCode::CapExceeded, "no width up to r_max = " + std::to_string(r_max) + " reached 1 - delta");
    r = std::min(2 * r, r_max);
  }
  std::size_t hi = r;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (evaluate(mid) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }

  MinWidthEstimate est;
  est.r_hat = hi;
  est.trials = trials;
  est.eps = eps;
  est.delta = delta;
  for (const auto& [w, v] : raw) {
    const auto s = detail::tally(smoothed(w), eps, f_norm);
    est.search_trace.push_back({w, s.probability, s.ci});
    if (w == hi) est.success_prob_at_r_hat = s.probability;
  }
  return est;
}

}  // namespace widthlab
