#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include "widthlab/error.hpp"
#include "widthlab/lattice.hpp"

namespace widthlab {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSqrt2 = std::numbers::sqrt2;

/// D^M T_K = coeff * T_index.
struct DerivedTerm {
  double coeff = 0.0;
  MultiIndex index;
};

namespace detail {

inline void check_dims(std::size_t a, std::size_t b, const char* what) {
  require(a == b, ErrorCode::DimensionMismatch,
          std::string(what) + ": dimension " + std::to_string(a) + " vs " + std::to_string(b));
}

inline double dot(const MultiIndex& K, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < K.dim(); ++i) s += K[i] * x[i];
  return s;
}

}  // namespace detail

/// sqrt(2) sin(pi <J, y>) written as coeff * T_index(y).
inline DerivedTerm sin_in_basis(const MultiIndex& J) {
  switch (classify(J)) {
    case IndexClass::Zero: return {0.0, J};
    case IndexClass::Sin: return {1.0, J};
    case IndexClass::Cos: return {-1.0, -J};
  }
  return {};
}

/// sqrt(2) cos(pi <J, y>) written as coeff * T_index(y).
inline DerivedTerm cos_in_basis(const MultiIndex& J) {
  switch (classify(J)) {
    case IndexClass::Zero: return {kSqrt2, J};
    case IndexClass::Cos: return {1.0, J};
    case IndexClass::Sin: return {1.0, -J};
  }
  return {};
}

/// Orthonormal trigonometric basis element T_K on uniform [-1,1]^d.
inline double eval_T(const MultiIndex& K, std::span<const double> x) {
  detail::check_dims(K.dim(), x.size(), "eval_T");
  switch (classify(K)) {
    case IndexClass::Zero: return 1.0;
    case IndexClass::Sin: return kSqrt2 * std::sin(kPi * detail::dot(K, x));
    case IndexClass::Cos: return kSqrt2 * std::cos(kPi * detail::dot(K, x));
  }
  return 0.0;
}

/// T_K(rho * x) without forming the scaled point.
inline double eval_T_scaled(const MultiIndex& K, std::span<const double> x, double rho) {
  detail::check_dims(K.dim(), x.size(), "eval_T");
  switch (classify(K)) {
    case IndexClass::Zero: return 1.0;
    case IndexClass::Sin: return kSqrt2 * std::sin(kPi * rho * detail::dot(K, x));
    case IndexClass::Cos: return kSqrt2 * std::cos(kPi * rho * detail::dot(K, x));
  }
  return 0.0;
}

/// Upper bound sqrt(2) pi ||K||_2 on the Lipschitz constant of T_K.
inline double lipschitz_bound(const MultiIndex& K) { return kSqrt2 * kPi * K.l2_norm(); }

/// Exact D^M T_K. M holds nonnegative derivative orders.
inline DerivedTerm partial_derivative(const MultiIndex& K, const MultiIndex& M) {
  detail::check_dims(K.dim(), M.dim(), "partial_derivative");
  for (int m : M.entries()) require(m >= 0, ErrorCode::ParameterOutOfRange, "derivative orders must be >= 0");
  const auto order = static_cast<int>(M.l1_norm());
  if (order == 0) return {1.0, K};
  const IndexClass cls = classify(K);
  if (cls == IndexClass::Zero) return {0.0, K};

  double scale = std::pow(kPi, order);
  for (std::size_t i = 0; i < K.dim(); ++i) scale *= std::pow(static_cast<double>(K[i]), M[i]);

  // n-th derivative of sin / cos in the phase, as (sign, is_sin).
  const int phase = order % 4;
  bool is_sin;
  double sign;
  if (cls == IndexClass::Sin) {
    is_sin = (phase % 2 == 0);
    sign = (phase < 2) ? 1.0 : -1.0;
  } else {
    is_sin = (phase % 2 == 1);
    sign = (phase == 0 || phase == 3) ? 1.0 : -1.0;
  }
  DerivedTerm t = is_sin ? sin_in_basis(K) : cos_in_basis(K);
  t.coeff *= sign * scale;
  return t;
}

/// <D^M T_K, D^M T_K'> on uniform [-1,1]^d: 1{K = K'} pi^{2|M|} K^{2M}.
inline double deriv_inner_product(const MultiIndex& K, const MultiIndex& Kp, const MultiIndex& M) {
  detail::check_dims(K.dim(), Kp.dim(), "deriv_inner_product");
  detail::check_dims(K.dim(), M.dim(), "deriv_inner_product");
  if (K != Kp) return 0.0;
  double v = std::pow(kPi, 2.0 * static_cast<double>(M.l1_norm()));
  for (std::size_t i = 0; i < K.dim(); ++i) v *= std::pow(static_cast<double>(K[i]), 2 * M[i]);
  return v;
}

/// P(x) = sum_K beta_K T_K(scale * x), stored sparsely.
class TrigPolynomial {
 public:
  explicit TrigPolynomial(std::size_t dim = 1, double scale = 1.0) : dim_(dim), scale_(scale) {
    require(dim >= 1, ErrorCode::ParameterOutOfRange, "dimension must be >= 1");
    require(scale > 0.0 && scale <= 1.0, ErrorCode::ParameterOutOfRange, "scale must lie in (0, 1]");
  }

  std::size_t dim() const { return dim_; }
  double scale() const { return scale_; }
  const std::map<MultiIndex, double>& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  /// Accumulates into the coefficient of K; exact zeros are dropped.
  TrigPolynomial& add(const MultiIndex& K, double beta) {
    detail::check_dims(K.dim(), dim_, "TrigPolynomial::add");
    double& slot = terms_[K];
    slot += beta;
    if (slot == 0.0) terms_.erase(K);
    return *this;
  }

  double coefficient(const MultiIndex& K) const {
    const auto it = terms_.find(K);
    return it == terms_.end() ? 0.0 : it->second;
  }

  double max_abs_coefficient() const {
    double m = 0.0;
    for (const auto& [K, b] : terms_) m = std::max(m, std::abs(b));
    return m;
  }

  /// Largest ||K||_2 over stored terms.
  double degree_radius() const {
    std::int64_t r = 0;
    for (const auto& [K, b] : terms_) r = std::max(r, K.l2_norm_sq());
    return std::sqrt(static_cast<double>(r));
  }

  double operator()(std::span<const double> x) const { return eval(x); }

  double eval(std::span<const double> x) const {
    detail::check_dims(x.size(), dim_, "TrigPolynomial::eval");
    double s = 0.0;
    for (const auto& [K, b] : terms_) s += b * eval_T_scaled(K, x, scale_);
    return s;
  }

  TrigPolynomial scaled(double factor) const {
    TrigPolynomial out(dim_, scale_);
    if (factor == 0.0) return out;
    for (const auto& [K, b] : terms_) out.add(K, factor * b);
    return out;
  }

 private:
  std::size_t dim_;
  double scale_;
  std::map<MultiIndex, double> terms_;
};

inline double eval_poly(const TrigPolynomial& P, std::span<const double> x) { return P.eval(x); }

/// sqrt(sum beta_K^2); only valid at unit scale where the basis is orthonormal.
inline double parseval_norm(const TrigPolynomial& P) {
  require(P.scale() == 1.0, ErrorCode::ScaleNotUnit, "parseval_norm needs scale 1");
  double s = 0.0;
  for (const auto& [K, b] : P.terms()) s += b * b;
  return std::sqrt(s);
}

}  // namespace widthlab
