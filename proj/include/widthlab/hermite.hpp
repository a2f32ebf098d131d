#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "widthlab/error.hpp"
#include "widthlab/lattice.hpp"
#include "widthlab/quadrature.hpp"
#include "widthlab/trig_basis.hpp"

namespace widthlab {

inline constexpr int kHermiteDegreeCap = 200;

/// h_0..h_n at z by the normalized three-term recurrence.
inline std::vector<double> h_table(int n, double z) {
  require(n >= 0, ErrorCode::NegativeIndex, "Hermite degree must be >= 0");
  require(n <= kHermiteDegreeCap, ErrorCode::DegreeCap,
          "Hermite degree " + std::to_string(n) + " exceeds cap " + std::to_string(kHermiteDegreeCap));
  std::vector<double> h(static_cast<std::size_t>(n) + 1);
  h[0] = 1.0;
  if (n >= 1) h[1] = z;
  for (int m = 1; m < n; ++m) {
    h[m + 1] = (z * h[m] - std::sqrt(static_cast<double>(m)) * h[m - 1]) / std::sqrt(static_cast<double>(m + 1));
  }
  return h;
}

inline double h_univariate(int n, double z) { return h_table(n, z).back(); }

namespace detail {

inline void check_nonnegative(const MultiIndex& K) {
  for (int v : K.entries()) require(v >= 0, ErrorCode::NegativeIndex, "Hermite index " + K.to_string() + " is negative");
}

}  // namespace detail

/// H_K(x) = prod_j h_{K_j}(x_j).
inline double H_multivariate(const MultiIndex& K, std::span<const double> x) {
  detail::check_dims(K.dim(), x.size(), "H_multivariate");
  detail::check_nonnegative(K);
  double p = 1.0;
  for (std::size_t j = 0; j < K.dim(); ++j) p *= h_univariate(K[j], x[j]);
  return p;
}

/// dH_K/dx_i = sqrt(K_i) H_{K - e_i}.
inline DerivedTerm hermite_partial(const MultiIndex& K, std::size_t i) {
  require(i < K.dim(), ErrorCode::ParameterOutOfRange, "coordinate out of range");
  detail::check_nonnegative(K);
  if (K[i] == 0) return {0.0, K};
  MultiIndex J = K;
  --J[i];
  return {std::sqrt(static_cast<double>(K[i])), J};
}

/// Sparse sum_K alpha_K H_K over K in N^d.
class HermitePolynomial {
 public:
  explicit HermitePolynomial(std::size_t dim = 1) : dim_(dim) {
    require(dim >= 1, ErrorCode::ParameterOutOfRange, "dimension must be >= 1");
  }

  std::size_t dim() const { return dim_; }
  const std::map<MultiIndex, double>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  HermitePolynomial& add(const MultiIndex& K, double alpha) {
    detail::check_dims(K.dim(), dim_, "HermitePolynomial::add");
    detail::check_nonnegative(K);
    double& slot = terms_[K];
    slot += alpha;
    if (slot == 0.0) terms_.erase(K);
    return *this;
  }

  double coefficient(const MultiIndex& K) const {
    const auto it = terms_.find(K);
    return it == terms_.end() ? 0.0 : it->second;
  }

  int max_degree() const {
    std::int64_t m = 0;
    for (const auto& [K, a] : terms_) m = std::max(m, K.l1_norm());
    return static_cast<int>(m);
  }

  double eval(std::span<const double> x) const {
    detail::check_dims(x.size(), dim_, "HermitePolynomial::eval");
    if (terms_.empty()) return 0.0;
    int top = 0;
    for (const auto& [K, a] : terms_) {
      for (int v : K.entries()) top = std::max(top, v);
    }
    std::vector<std::vector<double>> tables(dim_);
    for (std::size_t j = 0; j < dim_; ++j) tables[j] = h_table(top, x[j]);
    double s = 0.0;
    for (const auto& [K, a] : terms_) {
      double p = a;
      for (std::size_t j = 0; j < dim_; ++j) p *= tables[j][static_cast<std::size_t>(K[j])];
      s += p;
    }
    return s;
  }

  double operator()(std::span<const double> x) const { return eval(x); }

 private:
  std::size_t dim_;
  std::map<MultiIndex, double> terms_;
};

inline FunctionHandle as_function(const HermitePolynomial& P) {
  return {[P](std::span<const double> x) { return P.eval(x); }, P.dim()};
}

inline FunctionHandle hermite_function(const MultiIndex& K) {
  detail::check_nonnegative(K);
  return {[K](std::span<const double> x) { return H_multivariate(K, x); }, K.dim()};
}

/// Coefficients of d/dx_i of sum alpha_K H_K: beta_K = sqrt(K_i + 1) alpha_{K + e_i}.
inline HermitePolynomial term_by_term_coeffs(const HermitePolynomial& alpha, std::size_t i) {
  require(i < alpha.dim(), ErrorCode::ParameterOutOfRange, "coordinate out of range");
  HermitePolynomial beta(alpha.dim());
  for (const auto& [K, a] : alpha.terms()) {
    const DerivedTerm t = hermite_partial(K, i);
    if (t.coeff != 0.0) beta.add(t.index, t.coeff * a);
  }
  return beta;
}

/// All K in N^d with |K|_1 <= k, lexicographic.
inline std::vector<MultiIndex> enumerate_simplex(int k, std::size_t d, std::uint64_t cap = default_cap()) {
  require(k >= 0 && d >= 1, ErrorCode::ParameterOutOfRange, "enumerate_simplex needs k >= 0, d >= 1");
  // C(k + d, d) with saturation.
  long double count = 1.0L;
  for (std::size_t j = 1; j <= d; ++j) count = count * static_cast<long double>(k + static_cast<int>(j)) / static_cast<long double>(j);
  require(count <= static_cast<long double>(cap), ErrorCode::CapExceeded,
          "Hermite index set of degree " + std::to_string(k) + " in dimension " + std::to_string(d) + " exceeds cap");
  std::vector<MultiIndex> out;
  MultiIndex K = MultiIndex::zero(d);
  auto recurse = [&](auto&& self, std::size_t j, int remaining) -> void {
    if (j == d) {
      out.push_back(K);
      return;
    }
    for (int v = 0; v <= remaining; ++v) {
      K[j] = v;
      self(self, j + 1, remaining - v);
    }
    K[j] = 0;
  };
  recurse(recurse, 0, k);
  return out;
}

struct HermiteTruncation {
  HermitePolynomial polynomial;
  int degree = 0;         // ceil(L^2 / eps^2)
  double residual = 0.0;  // ||f - P|| on the grid
};

/// Projection of f onto {H_K : |K|_1 <= ceil(L^2 / eps^2)} under the Gaussian measure.
inline HermiteTruncation hermite_truncate(const FunctionHandle& f, double L, double eps, const Grid& grid,
                                          std::uint64_t cap = default_cap()) {
  require(grid.measure() == Measure::Gaussian, ErrorCode::WrongMeasure, "Hermite truncation needs the Gaussian measure");
  require(L > 0.0 && eps > 0.0, ErrorCode::ParameterOutOfRange, "L and eps must be positive");
  detail::check_dims(f.dim, grid.dim(), "hermite_truncate");
  const double raw = std::ceil(L * L / (eps * eps) - 1e-12);
  require(raw <= kHermiteDegreeCap, ErrorCode::DegreeCap, "truncation degree exceeds the Hermite degree cap");
  const int k = static_cast<int>(raw);
  const std::size_t d = f.dim;
  const auto indices = enumerate_simplex(k, d, cap);

  const std::size_t n = grid.size();
  // tables[p * d + j][m] = h_m(x_pj)
  std::vector<std::vector<double>> tables(n * d);
  for (std::size_t p = 0; p < n; ++p) {
    const auto x = grid.node(p);
    for (std::size_t j = 0; j < d; ++j) tables[p * d + j] = h_table(k, x[j]);
  }
  const auto fv = sample_on(f, grid);

  HermiteTruncation out{HermitePolynomial(d), k, 0.0};
  std::vector<double> fitted(n, 0.0);
  for (const auto& K : indices) {
    double alpha = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      double h = 1.0;
      for (std::size_t j = 0; j < d; ++j) h *= tables[p * d + j][static_cast<std::size_t>(K[j])];
      alpha += grid.weight(p) * fv[p] * h;
    }
    if (alpha == 0.0) continue;
    out.polynomial.add(K, alpha);
    for (std::size_t p = 0; p < n; ++p) {
      double h = 1.0;
      for (std::size_t j = 0; j < d; ++j) h *= tables[p * d + j][static_cast<std::size_t>(K[j])];
      fitted[p] += alpha * h;
    }
  }
  double err2 = 0.0;
  for (std::size_t p = 0; p < n; ++p) err2 += grid.weight(p) * (fv[p] - fitted[p]) * (fv[p] - fitted[p]);
  out.residual = std::sqrt(err2);
  return out;
}

}  // namespace widthlab
