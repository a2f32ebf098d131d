#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "widthlab/error.hpp"
#include "widthlab/lattice.hpp"
#include "widthlab/quadrature.hpp"
#include "widthlab/trig_basis.hpp"

namespace widthlab {

/// Result of truncating a function to a bounded-degree trigonometric polynomial.
struct TruncationReport {
  TrigPolynomial polynomial;
  double degree_radius = 0.0;      // k
  double residual_estimate = 0.0;  // measured ||f - P|| on the grid
  double max_coefficient = 0.0;    // max |beta_K|
  std::optional<std::vector<int>> orthant;  // nu, set by the reflection pipeline
};

/// Unit-scale P with beta_K = <f, T_K> for every K in the radius-k ball.
inline TrigPolynomial project_onto_ball(const FunctionHandle& f, double k, const Grid& grid,
                                        std::uint64_t cap = default_cap()) {
  require(grid.measure() == Measure::UniformCube, ErrorCode::WrongMeasure,
          "trigonometric coefficients need the uniform cube measure");
  detail::check_dims(f.dim, grid.dim(), "project_onto_ball");
  const auto ball = enumerate_ball(k, f.dim, cap);
  const auto fv = sample_on(f, grid);
  std::vector<double> tv(grid.size());
  TrigPolynomial P(f.dim, 1.0);
  for (const auto& K : ball) {
    for (std::size_t i = 0; i < grid.size(); ++i) tv[i] = eval_T(K, grid.node(i));
    P.add(K, weighted_dot(fv, tv, grid));
  }
  return P;
}

namespace detail {

inline TruncationReport finish_report(const FunctionHandle& f, TrigPolynomial P, double k, const Grid& grid) {
  TruncationReport r{std::move(P), k, 0.0, 0.0, std::nullopt};
  r.residual_estimate = l2_error(f, as_function(r.polynomial), grid);
  r.max_coefficient = r.polynomial.max_abs_coefficient();
  return r;
}

}  // namespace detail

/// Truncation of an L-Lipschitz function with periodic boundary conditions at
/// k = L / (2 eps). Requires L / eps >= 2.
inline TruncationReport truncate_periodic(const FunctionHandle& f, double L, double eps, const Grid& grid) {
  require(L > 0.0 && eps > 0.0 && L / eps >= 2.0, ErrorCode::ParameterOutOfRange,
          "truncate_periodic requires L, eps > 0 and L / eps >= 2");
  const double k = L / (2.0 * eps);
  return detail::finish_report(f, project_onto_ball(f, k, grid), k, grid);
}

/// Rewrites P~(nu * (x + 1) / 2) as a polynomial in T_K(x / 2). P~ must have unit scale.
inline TrigPolynomial orthant_transform(const TrigPolynomial& Pt, std::span<const int> nu) {
  require(Pt.scale() == 1.0, ErrorCode::ScaleNotUnit, "orthant_transform expects a unit-scale polynomial");
  detail::check_dims(nu.size(), Pt.dim(), "orthant_transform");
  for (int s : nu) require(s == 1 || s == -1, ErrorCode::ParameterOutOfRange, "orthant signs must be +-1");

  TrigPolynomial out(Pt.dim(), 0.5);
  for (const auto& [K, beta] : Pt.terms()) {
    const IndexClass cls = classify(K);
    if (cls == IndexClass::Zero) {
      out.add(K, beta);
      continue;
    }
    MultiIndex J = K;
    for (std::size_t i = 0; i < J.dim(); ++i) J[i] *= nu[i];
    const int phase = static_cast<int>(((J.sum() % 4) + 4) % 4);
    // sqrt2 sin(theta + phase*pi/2) or sqrt2 cos(theta + phase*pi/2) with theta = pi <J, x/2>.
    bool as_sin;
    double sign;
    if (cls == IndexClass::Sin) {
      as_sin = (phase % 2 == 0);
      sign = (phase < 2) ? 1.0 : -1.0;
    } else {
      as_sin = (phase % 2 == 1);
      sign = (phase == 0 || phase == 3) ? 1.0 : -1.0;
    }
    const DerivedTerm t = as_sin ? sin_in_basis(J) : cos_in_basis(J);
    out.add(t.index, sign * t.coeff * beta);
  }
  return out;
}

/// Truncation of a non-periodic L-Lipschitz function on [-1,1]^d through even
/// reflection. Produces P(x) = sum beta_K T_K(x / 2) with k = L / eps and reports
/// the orthant nu whose transformed polynomial fits f best on the grid.
inline TruncationReport reflect_and_truncate(const FunctionHandle& f, double L, double eps, const Grid& grid) {
  require(L > 0.0 && eps > 0.0 && L / eps >= 1.0, ErrorCode::ParameterOutOfRange,
          "reflect_and_truncate requires L, eps > 0 and L / eps >= 1");
  const std::size_t d = f.dim;
  require(d <= 20, ErrorCode::ParameterOutOfRange, "orthant search is limited to d <= 20");
  const double k = L / eps;

  // f~(x) = f_bar(|x|) with f_bar(y) = f(2y - 1).
  const FunctionHandle reflected{[f](std::span<const double> x) {
                                   std::vector<double> y(x.size());
                                   for (std::size_t i = 0; i < x.size(); ++i) y[i] = 2.0 * std::abs(x[i]) - 1.0;
                                   return f(y);
                                 },
                                 d};
  const TrigPolynomial Pt = project_onto_ball(reflected, k, grid);

  const auto fv = sample_on(f, grid);
  std::optional<TrigPolynomial> best;
  std::vector<int> best_nu;
  double best_err = std::numeric_limits<double>::infinity();
  std::vector<int> nu(d, 1);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    for (std::size_t i = 0; i < d; ++i) nu[i] = (mask >> i) & 1U ? -1 : 1;
    TrigPolynomial P = orthant_transform(Pt, nu);
    double err2 = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double diff = fv[i] - P.eval(grid.node(i));
      err2 += grid.weight(i) * diff * diff;
    }
    if (err2 < best_err) {
      best_err = err2;
      best = std::move(P);
      best_nu = nu;
    }
  }
  TruncationReport r = detail::finish_report(f, std::move(*best), k, grid);
  r.orthant = best_nu;
  return r;
}

/// Truncation radius for an H^s function with Sobolev norm at most gamma.
inline double sobolev_truncation_radius(int s, double gamma, double eps) {
  require(s >= 1, ErrorCode::ParameterOutOfRange, "Sobolev order must be >= 1");
  require(gamma > 0.0 && eps > 0.0, ErrorCode::ParameterOutOfRange, "gamma and eps must be positive");
  const double inv = 1.0 / static_cast<double>(s);
  return std::sqrt(static_cast<double>(s)) * std::pow(gamma, inv) / std::pow(2.0 * eps, inv);
}

inline TruncationReport truncate_sobolev(const FunctionHandle& f, int s, double gamma, double eps, const Grid& grid) {
  const double k = sobolev_truncation_radius(s, gamma, eps);
  return detail::finish_report(f, project_onto_ball(f, k, grid), k, grid);
}

/// c_{K,s} = sum over M in N^d with |M| <= s of prod_i (pi K_i)^{2 M_i}.
inline double c_ks(const MultiIndex& K, int s) {
  require(s >= 0, ErrorCode::ParameterOutOfRange, "Sobolev order must be >= 0");
  // by_order[m] = sum over |M| = m, built one coordinate at a time.
  std::vector<double> by_order(static_cast<std::size_t>(s) + 1, 0.0);
  by_order[0] = 1.0;
  for (std::size_t i = 0; i < K.dim(); ++i) {
    const double a = kPi * kPi * static_cast<double>(K[i]) * static_cast<double>(K[i]);
    std::vector<double> next(by_order.size(), 0.0);
    for (int m = 0; m <= s; ++m) {
      double power = 1.0;
      for (int j = 0; j <= m; ++j) {
        next[m] += by_order[m - j] * power;
        power *= a;
      }
    }
    by_order = std::move(next);
  }
  double total = 0.0;
  for (double v : by_order) total += v;
  return total;
}

/// ||P||_{H^s} from the coefficients: sqrt(sum beta_K^2 c_{K,s}).
inline double sobolev_norm_from_coeffs(const TrigPolynomial& P, int s) {
  require(P.scale() == 1.0, ErrorCode::ScaleNotUnit, "Sobolev norm from coefficients needs scale 1");
  double total = 0.0;
  for (const auto& [K, b] : P.terms()) total += b * b * c_ks(K, s);
  return std::sqrt(total);
}

}  // namespace widthlab
