#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "widthlab/error.hpp"
#include "widthlab/lattice.hpp"
#include "widthlab/network.hpp"
#include "widthlab/quadrature.hpp"
#include "widthlab/rng.hpp"
#include "widthlab/trig_basis.hpp"

namespace widthlab {

/// Boundary data and curvature of a ridge profile phi on [-sqrt d, sqrt d].
struct RidgeProfile {
  double phi_left = 0.0;   // phi(-sqrt d)
  double dphi_left = 0.0;  // phi'(-sqrt d)
  std::function<double(double)> d2phi;
};

/// Bias density psi(b) such that E_{b ~ U[-2 sqrt d, 2 sqrt d]}[psi(b) ReLU(z - b)] = phi(z)
/// for every z in [-sqrt d, sqrt d].
inline double psi(const RidgeProfile& profile, std::size_t d, double b) {
  const double s = std::sqrt(static_cast<double>(d));
  require(b >= -2.0 * s && b <= 2.0 * s, ErrorCode::OutOfSupport, "bias outside [-2 sqrt d, 2 sqrt d]");
  if (b < -1.5 * s) return 16.0 / s * profile.phi_left - 4.0 * profile.dphi_left;
  if (b < -s) return -16.0 / s * profile.phi_left + 12.0 * profile.dphi_left;
  if (b <= s) return 4.0 * s * (profile.d2phi ? profile.d2phi(b) : 0.0);
  return 0.0;
}

namespace detail {

// phi_K(z) = sqrt2 sin(omega z), sqrt2 cos(omega z) or 1, with omega = pi rho ||K||.
struct IndexProfile {
  IndexClass cls;
  double omega;

  double phi(double z) const {
    switch (cls) {
      case IndexClass::Zero: return 1.0;
      case IndexClass::Sin: return kSqrt2 * std::sin(omega * z);
      case IndexClass::Cos: return kSqrt2 * std::cos(omega * z);
    }
    return 0.0;
  }
  double dphi(double z) const {
    switch (cls) {
      case IndexClass::Zero: return 0.0;
      case IndexClass::Sin: return kSqrt2 * omega * std::cos(omega * z);
      case IndexClass::Cos: return -kSqrt2 * omega * std::sin(omega * z);
    }
    return 0.0;
  }
  double d2phi(double z) const { return cls == IndexClass::Zero ? 0.0 : -omega * omega * phi(z); }
};

inline IndexProfile index_profile(const MultiIndex& K, double rho) { return {classify(K), kPi * rho * K.l2_norm()}; }

}  // namespace detail

/// Ridge profile of T_K(rho x) along w = K / ||K||.
inline RidgeProfile profile_for_index(const MultiIndex& K, double rho) {
  const auto p = detail::index_profile(K, rho);
  const double s = std::sqrt(static_cast<double>(K.dim()));
  return {p.phi(-s), p.dphi(-s), [p](double z) { return p.d2phi(z); }};
}

/// psi for the profile of T_K(rho x), evaluated in closed form.
inline double psi_K(const MultiIndex& K, double rho, std::size_t d, double b) {
  detail::check_dims(K.dim(), d, "psi_K");
  const double s = std::sqrt(static_cast<double>(d));
  require(b >= -2.0 * s && b <= 2.0 * s, ErrorCode::OutOfSupport, "bias outside [-2 sqrt d, 2 sqrt d]");
  const auto p = detail::index_profile(K, rho);
  if (b < -1.5 * s) return 16.0 / s * p.phi(-s) - 4.0 * p.dphi(-s);
  if (b < -s) return -16.0 / s * p.phi(-s) + 12.0 * p.dphi(-s);
  if (b <= s) return 4.0 * s * p.d2phi(b);
  return 0.0;
}

/// The points where psi_K (and so the mixture integrand) may be non-smooth.
inline std::vector<double> psi_breakpoints(std::size_t d) {
  const double s = std::sqrt(static_cast<double>(d));
  return {-2.0 * s, -1.5 * s, -s, s, 2.0 * s};
}

// ---------------------------------------------------------------------------
// Parameter distributions

/// Distribution of (b, w) for random ReLU features.
///
/// The lattice kind is D_k: b ~ U[-2 sqrt d, 2 sqrt d], w = K / ||K|| with K uniform
/// on the radius-k ball (K = 0 maps to 1/sqrt d). The custom kind wraps caller
/// samplers whose weight marginal the caller declares permutation invariant.
class ReluParamDist {
 public:
  using BiasSampler = std::function<double(Rng&)>;
  using WeightSampler = std::function<std::vector<double>(Rng&)>;

  static ReluParamDist lattice(double k, std::size_t d, std::uint64_t cap = default_cap()) {
    ReluParamDist dist;
    dist.dim_ = d;
    dist.k_ = k;
    dist.ball_ = std::make_shared<const std::vector<MultiIndex>>(enumerate_ball(k, d, cap));
    return dist;
  }

  static ReluParamDist custom(std::size_t d, BiasSampler bias, WeightSampler weight, bool permutation_invariant) {
    require(permutation_invariant, ErrorCode::ParameterOutOfRange,
            "custom weight distributions must be declared permutation invariant");
    require(d >= 1 && bias && weight, ErrorCode::ParameterOutOfRange, "custom distribution needs samplers");
    ReluParamDist dist;
    dist.dim_ = d;
    dist.bias_ = std::move(bias);
    dist.weight_ = std::move(weight);
    return dist;
  }

  /// Uniform directions on the sphere with b ~ U[-radius, radius].
  static ReluParamDist spherical(std::size_t d, double radius) {
    return custom(
        d, [radius](Rng& rng) { return rng.uniform(-radius, radius); },
        [d](Rng& rng) {
          std::vector<double> w(d);
          double n2 = 0.0;
          do {
            n2 = 0.0;
            for (double& v : w) {
              v = rng.normal();
              n2 += v * v;
            }
          } while (n2 == 0.0);
          const double n = std::sqrt(n2);
          for (double& v : w) v /= n;
          return w;
        },
        true);
  }

  bool is_lattice() const { return ball_ != nullptr; }
  std::size_t dim() const { return dim_; }
  double k() const { return k_; }
  std::uint64_t ball_size() const { return ball_ ? ball_->size() : 0; }
  const std::vector<MultiIndex>& ball() const {
    require(is_lattice(), ErrorCode::ParameterOutOfRange, "not a lattice distribution");
    return *ball_;
  }

  /// Draws (b, w) in that order from the stream.
  ReluFeature sample(Rng& rng) const {
    if (ball_) {
      const double s = std::sqrt(static_cast<double>(dim_));
      const double b = rng.uniform(-2.0 * s, 2.0 * s);
      const MultiIndex& K = (*ball_)[rng.uniform_index(ball_->size())];
      return ReluFeature(b, direction_of(K));
    }
    const double b = bias_(rng);
    return ReluFeature(b, weight_(rng));
  }

  std::vector<ReluFeature> sample(Rng& rng, std::size_t r) const {
    std::vector<ReluFeature> out;
    out.reserve(r);
    for (std::size_t i = 0; i < r; ++i) out.push_back(sample(rng));
    return out;
  }

 private:
  ReluParamDist() = default;

  std::size_t dim_ = 0;
  double k_ = 0.0;
  std::shared_ptr<const std::vector<MultiIndex>> ball_;
  BiasSampler bias_;
  WeightSampler weight_;
};

inline ReluFeature sample(const ReluParamDist& dist, Rng& rng) { return dist.sample(rng); }

/// Support point of the D_k weight marginal and the ball indices that generate it.
struct DirectionClass {
  std::vector<double> weight;
  std::vector<MultiIndex> members;  // K_{k,d,w}
};

/// Groups the radius-k ball by direction (primitive integer vector), with K = 0
/// joining the all-ones direction.
inline std::vector<DirectionClass> direction_classes(double k, std::size_t d, std::uint64_t cap = default_cap()) {
  std::map<MultiIndex, std::vector<MultiIndex>> groups;
  for (const auto& K : enumerate_ball(k, d, cap)) {
    MultiIndex key;
    if (K.is_zero()) {
      key = MultiIndex(std::vector<int>(d, 1));
    } else {
      int g = 0;
      for (int v : K.entries()) g = std::gcd(g, std::abs(v));
      std::vector<int> p(d);
      for (std::size_t i = 0; i < d; ++i) p[i] = K[i] / g;
      key = MultiIndex(p);
    }
    groups[key].push_back(K);
  }
  std::vector<DirectionClass> out;
  out.reserve(groups.size());
  for (auto& [key, members] : groups) out.push_back({direction_of(key), std::move(members)});
  return out;
}

// ---------------------------------------------------------------------------
// Mixture weights

namespace detail {

inline bool is_diagonal(std::span<const double> w) {
  const double c = 1.0 / std::sqrt(static_cast<double>(w.size()));
  for (double v : w) {
    if (std::abs(v - c) > 1e-12) return false;
  }
  return true;
}

}  // namespace detail

/// K_{k,d,w}: ball indices that are nonnegative multiples of w (0 only for the
/// all-ones direction), found by scanning integer multiples along w.
inline std::vector<MultiIndex> multiples_in_ball(std::span<const double> w, double k) {
  const std::size_t d = w.size();
  const std::int64_t R = radius_sq_bound(k);
  std::vector<MultiIndex> out;
  if (detail::is_diagonal(w)) out.push_back(MultiIndex::zero(d));

  std::size_t lead = 0;
  for (std::size_t i = 1; i < d; ++i) {
    if (std::abs(w[i]) > std::abs(w[lead])) lead = i;
  }
  const double wl = std::abs(w[lead]);
  if (wl == 0.0) return out;
  // The leading coordinate of eta * w is a positive integer n with eta = n / |w_lead| <= k.
  const auto n_max = static_cast<std::int64_t>(std::floor(k * wl + 1e-9));
  for (std::int64_t n = 1; n <= n_max; ++n) {
    const double eta = static_cast<double>(n) / wl;
    std::vector<int> cand(d);
    bool integral = true;
    for (std::size_t i = 0; i < d && integral; ++i) {
      const double v = eta * w[i];
      const double r = std::round(v);
      integral = std::abs(v - r) <= 1e-9 * std::max(1.0, eta);
      cand[i] = static_cast<int>(r);
    }
    if (!integral) continue;
    MultiIndex K(std::move(cand));
    if (K.l2_norm_sq() <= R) out.push_back(std::move(K));
  }
  return out;
}

/// h(b, w) = Q_{k,d} / |K_{k,d,w}| * sum_{K in K_{k,d,w}} beta_K psi_K(b), the
/// weighting under which E_{(b,w) ~ D_k}[h(b,w) ReLU(<w,x> - b)] = P(x).
class MixtureWeight {
 public:
  MixtureWeight(TrigPolynomial P, double k)
      : P_(std::move(P)), k_(k), q_(static_cast<double>(count_ball(k, P_.dim()))) {
    const std::int64_t R = radius_sq_bound(k);
    for (const auto& [K, beta] : P_.terms()) {
      require(K.l2_norm_sq() <= R, ErrorCode::ParameterOutOfRange,
              "polynomial term " + K.to_string() + " lies outside the radius-k ball");
    }
  }

  const TrigPolynomial& polynomial() const { return P_; }
  double k() const { return k_; }
  double ball_size() const { return q_; }

  double operator()(double b, std::span<const double> w) const {
    detail::check_dims(w.size(), P_.dim(), "h_weight");
    const auto members = multiples_in_ball(w, k_);
    require(!members.empty(), ErrorCode::WeightNotInSupport, "weight is not a direction of the lattice ball");
    double s = 0.0;
    for (const auto& K : members) {
      const double beta = P_.coefficient(K);
      if (beta != 0.0) s += beta * psi_K(K, P_.scale(), P_.dim(), b);
    }
    return q_ / static_cast<double>(members.size()) * s;
  }

 private:
  TrigPolynomial P_;
  double k_;
  double q_;
};

inline double h_weight(double b, std::span<const double> w, const TrigPolynomial& P, double k, std::size_t d) {
  detail::check_dims(P.dim(), d, "h_weight");
  return MixtureWeight(P, k)(b, w);
}

/// E_{b ~ U[-2 sqrt d, 2 sqrt d]}[psi_K(b) ReLU(<w_K, x> - b)] by adaptive quadrature in b.
inline double relu_mixture_value(const MultiIndex& K, double rho, std::span<const double> x, double abs_tol = 1e-13) {
  const std::size_t d = K.dim();
  detail::check_dims(d, x.size(), "relu_mixture_value");
  const auto w = direction_of(K);
  double z = 0.0;
  for (std::size_t i = 0; i < d; ++i) z += w[i] * x[i];
  const double s = std::sqrt(static_cast<double>(d));
  auto bps = psi_breakpoints(d);
  bps.push_back(z);
  const auto integrand = [&](double b) { return psi_K(K, rho, d, b) * std::max(0.0, z - b); };
  return integrate_adaptive(integrand, -2.0 * s, 2.0 * s, abs_tol, bps) / (4.0 * s);
}

/// E_{(b, w) ~ D_k}[h(b, w) ReLU(<w, x> - b)], summing over the support directions
/// of D_k with their probabilities and integrating b adaptively.
inline double mixture_expectation(const MixtureWeight& h, std::span<const double> x, double abs_tol = 1e-13) {
  const std::size_t d = h.polynomial().dim();
  detail::check_dims(d, x.size(), "mixture_expectation");
  const double s = std::sqrt(static_cast<double>(d));
  double total = 0.0;
  for (const auto& cls : direction_classes(h.k(), d)) {
    bool active = false;
    for (const auto& K : cls.members) active = active || h.polynomial().coefficient(K) != 0.0;
    if (!active) continue;
    double z = 0.0;
    for (std::size_t i = 0; i < d; ++i) z += cls.weight[i] * x[i];
    auto bps = psi_breakpoints(d);
    bps.push_back(z);
    const auto integrand = [&](double b) { return h(b, cls.weight) * std::max(0.0, z - b); };
    const double prob = static_cast<double>(cls.members.size()) / h.ball_size();
    total += prob * integrate_adaptive(integrand, -2.0 * s, 2.0 * s, abs_tol, bps) / (4.0 * s);
  }
  return total;
}

/// Width sufficient for sample averages to reach error eps with probability 1 - delta:
/// ceil(360^2 d^2 beta_bar^2 k^4 Q^2 (1 + sqrt(2 ln(1/delta)))^2 / eps^2), at least 1.
inline std::uint64_t width_bound(double beta_bar, std::size_t d, double k, double Q, double eps, double delta) {
  require(beta_bar >= 0.0 && d >= 1 && k > 0.0 && Q > 0.0 && eps > 0.0, ErrorCode::ParameterOutOfRange,
          "width_bound needs beta_bar >= 0 and positive d, k, Q, eps");
  require(delta > 0.0 && delta <= 0.5, ErrorCode::ParameterOutOfRange, "delta must lie in (0, 1/2]");
  const double conf = 1.0 + std::sqrt(2.0 * std::log(1.0 / delta));
  const double dd = static_cast<double>(d);
  const double r = 360.0 * 360.0 * dd * dd * beta_bar * beta_bar * std::pow(k, 4) * Q * Q * conf * conf / (eps * eps);
  if (!(r < 1.8e19)) return std::numeric_limits<std::uint64_t>::max();
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(r)));
}

/// Network values at every grid node.
inline std::vector<double> network_on(const FittedSpan& span, const Grid& grid) {
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t j = 0; j < span.features.size(); ++j) {
    const double c = span.coefficients[j];
    if (c == 0.0) continue;
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] += c * span.features[j](grid.node(i));
  }
  return out;
}

/// Sample-average network (1/r) sum_i h(b_i, w_i) ReLU(<w_i, x> - b_i) with
/// (b_i, w_i) ~ D_k drawn from the stream seeded by `seed`; the residual is
/// measured against P on the grid.
inline FittedSpan sample_average_network(const TrigPolynomial& P, std::size_t r, const ReluParamDist& dist,
                                         std::uint64_t seed, const Grid& grid) {
  require(dist.is_lattice(), ErrorCode::ParameterOutOfRange, "sample averages need the lattice distribution D_k");
  require(r >= 1, ErrorCode::ParameterOutOfRange, "width must be >= 1");
  detail::check_dims(P.dim(), dist.dim(), "sample_average_network");
  const MixtureWeight h(P, dist.k());
  Rng rng(seed);
  FittedSpan span;
  span.grid_id = grid.spec().id();
  span.features = dist.sample(rng, r);
  span.coefficients.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    span.coefficients[i] = h(span.features[i].bias, span.features[i].weight) / static_cast<double>(r);
  }
  const auto net = network_on(span, grid);
  double err2 = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double diff = net[i] - P.eval(grid.node(i));
    err2 += grid.weight(i) * diff * diff;
  }
  span.l2_error = std::sqrt(err2);
  return span;
}

}  // namespace widthlab
