#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "widthlab/error.hpp"

namespace widthlab {

/// Default cap on materialized lattice balls and tensor grids. The environment
/// variable WIDTHLAB_CAP overrides it.
inline std::uint64_t default_cap() {
  if (const char* env = std::getenv("WIDTHLAB_CAP")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && v > 0) return v;
  }
  return 10'000'000ULL;
}

/// Integer vector K in Z^d indexing a basis function.
class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> entries) : entries_(std::move(entries)) {}
  MultiIndex(std::initializer_list<int> entries) : entries_(entries) {}

  static MultiIndex zero(std::size_t d) { return MultiIndex(std::vector<int>(d, 0)); }

  static MultiIndex unit(std::size_t d, std::size_t i) {
    MultiIndex e = zero(d);
    e.entries_.at(i) = 1;
    return e;
  }

  std::size_t dim() const { return entries_.size(); }
  int operator[](std::size_t i) const { return entries_[i]; }
  int& operator[](std::size_t i) { return entries_[i]; }
  const std::vector<int>& entries() const { return entries_; }

  bool is_zero() const {
    return std::all_of(entries_.begin(), entries_.end(), [](int v) { return v == 0; });
  }

  /// Sum of squares, exact in integer arithmetic.
  std::int64_t l2_norm_sq() const {
    std::int64_t s = 0;
    for (int v : entries_) s += static_cast<std::int64_t>(v) * v;
    return s;
  }

  double l2_norm() const { return std::sqrt(static_cast<double>(l2_norm_sq())); }

  std::int64_t l1_norm() const {
    std::int64_t s = 0;
    for (int v : entries_) s += std::abs(v);
    return s;
  }

  std::int64_t sum() const {
    std::int64_t s = 0;
    for (int v : entries_) s += v;
    return s;
  }

  MultiIndex operator-() const {
    MultiIndex n = *this;
    for (int& v : n.entries_) v = -v;
    return n;
  }

  friend MultiIndex operator+(MultiIndex a, const MultiIndex& b) {
    require(a.dim() == b.dim(), ErrorCode::DimensionMismatch, "multi-index dims differ");
    for (std::size_t i = 0; i < a.dim(); ++i) a.entries_[i] += b.entries_[i];
    return a;
  }

  friend MultiIndex operator-(MultiIndex a, const MultiIndex& b) { return a + (-b); }

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
  friend auto operator<=>(const MultiIndex& a, const MultiIndex& b) {
    return a.entries_ <=> b.entries_;
  }

  std::string to_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(entries_[i]);
    }
    return s + ")";
  }

 private:
  std::vector<int> entries_;
};

enum class IndexClass { Zero, Sin, Cos };

/// Zero for K = 0; Sin when the first nonzero coordinate is positive; Cos otherwise.
inline IndexClass classify(const MultiIndex& K) {
  for (int v : K.entries()) {
    if (v > 0) return IndexClass::Sin;
    if (v < 0) return IndexClass::Cos;
  }
  return IndexClass::Zero;
}

inline const char* to_string(IndexClass c) {
  switch (c) {
    case IndexClass::Zero: return "Zero";
    case IndexClass::Sin: return "Sin";
    case IndexClass::Cos: return "Cos";
  }
  return "?";
}

namespace detail {

inline std::int64_t isqrt(std::int64_t n) {
  if (n <= 0) return 0;
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

inline std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) {
  return (a > std::numeric_limits<std::uint64_t>::max() - b) ? std::numeric_limits<std::uint64_t>::max()
                                                              : a + b;
}

}  // namespace detail

/// Largest integer R with R <= k^2. Values of k^2 within a relative 1e-12 of an
/// integer snap to that integer, so k = sqrt(3.0) includes the norm-sqrt(3) shell.
inline std::int64_t radius_sq_bound(double k) {
  require(std::isfinite(k) && k >= 0.0, ErrorCode::ParameterOutOfRange, "radius must be finite and >= 0");
  const long double kk = static_cast<long double>(k) * static_cast<long double>(k);
  require(kk < 9.0e15L, ErrorCode::ParameterOutOfRange, "radius too large");
  const long double nearest = std::nearbyint(kk);
  if (std::fabs(kk - nearest) <= 1e-12L * std::max(1.0L, kk)) return static_cast<std::int64_t>(nearest);
  return static_cast<std::int64_t>(std::floor(kk));
}

/// True when K lies in the closed ball of radius k (exact integer comparison).
inline bool in_ball(const MultiIndex& K, double k) { return K.l2_norm_sq() <= radius_sq_bound(k); }

/// Q_{k,d}: number of K in Z^d with ||K||_2 <= k, counted coordinate by coordinate
/// without materializing the ball. Saturates at UINT64_MAX.
inline std::uint64_t count_ball(double k, std::size_t d) {
  require(d >= 1, ErrorCode::ParameterOutOfRange, "dimension must be >= 1");
  const std::int64_t R = radius_sq_bound(k);
  // counts[r] = number of points in the current dimension with squared norm <= r.
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(R) + 1);
  for (std::int64_t r = 0; r <= R; ++r) counts[r] = 2 * detail::isqrt(r) + 1;
  for (std::size_t dim = 2; dim <= d; ++dim) {
    std::vector<std::uint64_t> next(counts.size(), 0);
    for (std::int64_t r = 0; r <= R; ++r) {
      std::uint64_t total = counts[r];
      for (std::int64_t x = 1; x * x <= r; ++x) {
        total = detail::sat_add(total, detail::sat_add(counts[r - x * x], counts[r - x * x]));
      }
      next[r] = total;
    }
    counts = std::move(next);
  }
  return counts[R];
}

/// All K in the radius-k ball in lexicographic order. Throws CapExceeded when
/// Q_{k,d} exceeds `cap`.
inline std::vector<MultiIndex> enumerate_ball(double k, std::size_t d, std::uint64_t cap = default_cap()) {
  const std::uint64_t q = count_ball(k, d);
  require(q <= cap, ErrorCode::CapExceeded,
          "lattice ball has " + std::to_string(q) + " points, cap is " + std::to_string(cap));
  const std::int64_t R = radius_sq_bound(k);
  std::vector<MultiIndex> out;
  out.reserve(static_cast<std::size_t>(q));
  std::vector<int> cur(d, 0);
  auto recurse = [&](auto&& self, std::size_t i, std::int64_t remaining) -> void {
    if (i == d) {
      out.emplace_back(cur);
      return;
    }
    const auto m = static_cast<int>(detail::isqrt(remaining));
    for (int x = -m; x <= m; ++x) {
      cur[i] = x;
      self(self, i + 1, remaining - static_cast<std::int64_t>(x) * x);
    }
    cur[i] = 0;
  };
  recurse(recurse, 0, R);
  return out;
}

/// min(d log(k^2/d + 2), k^2 log(d/k^2 + 2)): the growth exponent of log Q_{k,d}
/// up to constants. Reporting aid only.
inline double exponent_envelope(double k, std::size_t d) {
  require(k >= 1.0, ErrorCode::ParameterOutOfRange, "exponent_envelope requires k >= 1");
  require(d >= 1, ErrorCode::ParameterOutOfRange, "dimension must be >= 1");
  const double k2 = k * k;
  const double dd = static_cast<double>(d);
  return std::min(dd * std::log(k2 / dd + 2.0), k2 * std::log(dd / k2 + 2.0));
}

}  // namespace widthlab
