#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "widthlab/error.hpp"
#include "widthlab/lattice.hpp"
#include "widthlab/rng.hpp"
#include "widthlab/trig_basis.hpp"

namespace widthlab {

enum class Measure { UniformCube, Gaussian };

inline const char* to_string(Measure m) { return m == Measure::UniformCube ? "uniform_cube" : "gaussian"; }

/// Black-box map R^d -> R. Evaluators must be deterministic and safe to call
/// concurrently.
struct FunctionHandle {
  std::function<double(std::span<const double>)> fn;
  std::size_t dim = 0;

  FunctionHandle() = default;
  FunctionHandle(std::function<double(std::span<const double>)> f, std::size_t d) : fn(std::move(f)), dim(d) {}

  double operator()(std::span<const double> x) const { return fn(x); }
};

inline FunctionHandle constant_function(double c, std::size_t d) {
  return {[c](std::span<const double>) { return c; }, d};
}

inline FunctionHandle basis_function(const MultiIndex& K) {
  return {[K](std::span<const double> x) { return eval_T(K, x); }, K.dim()};
}

inline FunctionHandle as_function(const TrigPolynomial& P) {
  return {[P](std::span<const double> x) { return P.eval(x); }, P.dim()};
}

// ---------------------------------------------------------------------------
// One-dimensional Gauss rules

/// Nodes and weights of an n-point Gauss rule for a probability measure.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Orthonormal three-term recurrence x p_k = b_{k+1} p_{k+1} + b_k p_{k-1} (zero diagonal).
// Returns p_n(x) and p_n'(x), and accumulates sum_{k<n} p_k(x)^2.
template <class OffDiag>
std::array<double, 3> orthonormal_eval(int n, double x, OffDiag b) {
  double pm1 = 0.0, p = 1.0, dpm1 = 0.0, dp = 0.0, christoffel = 0.0;
  for (int k = 0; k < n; ++k) {
    christoffel += p * p;
    const double bk1 = b(k + 1);
    const double bk = (k == 0) ? 0.0 : b(k);
    const double pn = (x * p - bk * pm1) / bk1;
    const double dpn = (p + x * dp - bk * dpm1) / bk1;
    pm1 = p;
    p = pn;
    dpm1 = dp;
    dp = dpn;
  }
  return {p, dp, christoffel};
}

template <class OffDiag>
GaussRule symmetric_gauss_rule(int n, OffDiag b) {
  require(n >= 1, ErrorCode::ParameterOutOfRange, "Gauss rule needs at least one node");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = b(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J, Eigen::EigenvaluesOnly);
  GaussRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = es.eigenvalues()(i);
    for (int it = 0; it < 8; ++it) {
      const auto [p, dp, c] = orthonormal_eval(n, x, b);
      const double step = p / dp;
      x -= step;
      if (std::abs(step) < 1e-16 * std::max(1.0, std::abs(x))) break;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / orthonormal_eval(n, x, b)[2];
  }
  // Symmetrize to remove residual rounding asymmetry.
  for (int i = 0; i < n / 2; ++i) {
    const double xn = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    const double wn = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
    rule.nodes[i] = -xn;
    rule.nodes[n - 1 - i] = xn;
    rule.weights[i] = rule.weights[n - 1 - i] = wn;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  double total = 0.0;
  for (double w : rule.weights) total += w;
  for (double& w : rule.weights) w /= total;
  return rule;
}

}  // namespace detail

/// Gauss-Legendre for the uniform probability measure on [-1, 1] (weights sum to 1).
inline GaussRule gauss_legendre(int n) {
  return detail::symmetric_gauss_rule(n, [](int k) {
    const double kk = k;
    return kk / std::sqrt(4.0 * kk * kk - 1.0);
  });
}

/// Gauss-Hermite for the standard normal (weights sum to 1).
inline GaussRule gauss_hermite(int n) {
  return detail::symmetric_gauss_rule(n, [](int k) { return std::sqrt(static_cast<double>(k)); });
}

// ---------------------------------------------------------------------------
// d-dimensional grids

struct TensorGauss {
  int nodes_per_dim = 24;
};

struct MonteCarlo {
  std::size_t sample_count = 10000;
  std::uint64_t seed = 0;
};

using Scheme = std::variant<TensorGauss, MonteCarlo>;

/// Which 1-D family a tensor rule uses. Auto picks the one matching the measure.
enum class GaussFamily { Auto, Legendre, Hermite };

struct QuadratureSpec {
  Measure measure = Measure::UniformCube;
  Scheme scheme = TensorGauss{};
  std::size_t dim = 1;
  GaussFamily family = GaussFamily::Auto;
  std::uint64_t cap = default_cap();

  std::string id() const {
    std::string s = to_string(measure);
    s += "/d=" + std::to_string(dim) + "/";
    if (const auto* t = std::get_if<TensorGauss>(&scheme)) {
      s += "tensor_gauss(" + std::to_string(t->nodes_per_dim) + ")";
    } else {
      const auto& mc = std::get<MonteCarlo>(scheme);
      s += "monte_carlo(" + std::to_string(mc.sample_count) + ",seed=" + std::to_string(mc.seed) + ")";
    }
    return s;
  }
};

/// Immutable node/weight list; nodes are stored row-major (size() x dim()).
class Grid {
 public:
  Grid(QuadratureSpec spec, std::vector<double> nodes, std::vector<double> weights)
      : spec_(std::move(spec)), nodes_(std::move(nodes)), weights_(std::move(weights)) {}

  const QuadratureSpec& spec() const { return spec_; }
  Measure measure() const { return spec_.measure; }
  std::size_t dim() const { return spec_.dim; }
  std::size_t size() const { return weights_.size(); }
  bool is_monte_carlo() const { return std::holds_alternative<MonteCarlo>(spec_.scheme); }

  std::span<const double> node(std::size_t i) const { return {nodes_.data() + i * dim(), dim()}; }
  double weight(std::size_t i) const { return weights_[i]; }
  std::span<const double> weights() const { return weights_; }

 private:
  QuadratureSpec spec_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

inline Grid make_grid(const QuadratureSpec& spec) {
  require(spec.dim >= 1, ErrorCode::ParameterOutOfRange, "grid dimension must be >= 1");
  const std::size_t d = spec.dim;
  std::vector<double> nodes, weights;

  if (const auto* tg = std::get_if<TensorGauss>(&spec.scheme)) {
    require(tg->nodes_per_dim >= 1, ErrorCode::ParameterOutOfRange, "nodes_per_dim must be >= 1");
    GaussFamily family = spec.family;
    if (family == GaussFamily::Auto) {
      family = spec.measure == Measure::UniformCube ? GaussFamily::Legendre : GaussFamily::Hermite;
    }
    const bool matches = (family == GaussFamily::Legendre) == (spec.measure == Measure::UniformCube);
    require(matches, ErrorCode::UnsupportedCombination, "tensor Gauss family does not match the measure");

    const auto n = static_cast<std::uint64_t>(tg->nodes_per_dim);
    long double total = 1.0L;
    for (std::size_t i = 0; i < d; ++i) total *= static_cast<long double>(n);
    require(total <= static_cast<long double>(spec.cap), ErrorCode::CapExceeded,
            "tensor grid with " + std::to_string(n) + "^" + std::to_string(d) + " nodes exceeds cap");

    const GaussRule rule = family == GaussFamily::Legendre ? gauss_legendre(tg->nodes_per_dim)
                                                           : gauss_hermite(tg->nodes_per_dim);
    const auto count = static_cast<std::size_t>(total);
    nodes.resize(count * d);
    weights.resize(count);
    std::vector<std::size_t> digit(d, 0);
    for (std::size_t p = 0; p < count; ++p) {
      double w = 1.0;
      for (std::size_t j = 0; j < d; ++j) {
        nodes[p * d + j] = rule.nodes[digit[j]];
        w *= rule.weights[digit[j]];
      }
      weights[p] = w;
      for (std::size_t j = d; j-- > 0;) {
        if (++digit[j] < n) break;
        digit[j] = 0;
      }
    }
  } else {
    const auto& mc = std::get<MonteCarlo>(spec.scheme);
    require(mc.sample_count >= 1, ErrorCode::ParameterOutOfRange, "sample_count must be >= 1");
    require(mc.sample_count <= spec.cap, ErrorCode::CapExceeded, "Monte Carlo sample count exceeds cap");
    Rng rng(mc.seed, 0x51A3D);
    nodes.resize(mc.sample_count * d);
    weights.assign(mc.sample_count, 1.0 / static_cast<double>(mc.sample_count));
    for (double& v : nodes) v = spec.measure == Measure::UniformCube ? rng.uniform(-1.0, 1.0) : rng.normal();
  }
  return Grid(spec, std::move(nodes), std::move(weights));
}

/// Tensor Gauss with `n` nodes per dimension for the given measure.
inline Grid tensor_grid(Measure measure, std::size_t d, int n) {
  QuadratureSpec spec;
  spec.measure = measure;
  spec.dim = d;
  spec.scheme = TensorGauss{n};
  return make_grid(spec);
}

inline Grid monte_carlo_grid(Measure measure, std::size_t d, std::size_t samples, std::uint64_t seed) {
  QuadratureSpec spec;
  spec.measure = measure;
  spec.dim = d;
  spec.scheme = MonteCarlo{samples, seed};
  return make_grid(spec);
}

/// TensorGauss(24) up to d = 4; beyond that Monte Carlo with 200 * r * N samples
/// (r features, N target functions), at least 10^4.
inline QuadratureSpec default_grid_spec(Measure measure, std::size_t d, std::size_t r, std::size_t n_targets,
                                        std::uint64_t seed) {
  QuadratureSpec spec;
  spec.measure = measure;
  spec.dim = d;
  if (d <= 4) {
    spec.scheme = TensorGauss{24};
  } else {
    spec.scheme = MonteCarlo{std::max<std::size_t>(10000, 200 * std::max<std::size_t>(r, 1) *
                                                              std::max<std::size_t>(n_targets, 1)),
                             seed};
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Inner products

/// f evaluated at every grid node.
inline std::vector<double> sample_on(const FunctionHandle& f, const Grid& grid) {
  detail::check_dims(f.dim, grid.dim(), "sample_on");
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = f(grid.node(i));
  return out;
}

inline double weighted_dot(std::span<const double> a, std::span<const double> b, const Grid& grid) {
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) s += grid.weight(i) * a[i] * b[i];
  return s;
}

/// Value with a standard-error estimate (zero for deterministic tensor rules).
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

inline Estimate inner_product_estimate(const FunctionHandle& f, const FunctionHandle& g, const Grid& grid) {
  detail::check_dims(f.dim, g.dim, "inner_product");
  detail::check_dims(f.dim, grid.dim(), "inner_product");
  const std::size_t n = grid.size();
  double mean = 0.0, m2 = 0.0;
  double value = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = grid.node(i);
    const double v = f(x) * g(x);
    value += grid.weight(i) * v;
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  Estimate e{value, 0.0};
  if (grid.is_monte_carlo() && n > 1) e.std_error = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  return e;
}

/// <f, g>_mu = E_{x ~ mu}[f(x) g(x)] on the grid.
inline double inner_product(const FunctionHandle& f, const FunctionHandle& g, const Grid& grid) {
  return inner_product_estimate(f, g, grid).value;
}

/// ||f - g||_mu on the grid.
inline double l2_error(const FunctionHandle& f, const FunctionHandle& g, const Grid& grid) {
  detail::check_dims(f.dim, g.dim, "l2_error");
  detail::check_dims(f.dim, grid.dim(), "l2_error");
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto x = grid.node(i);
    const double diff = f(x) - g(x);
    s += grid.weight(i) * diff * diff;
  }
  return std::sqrt(std::max(0.0, s));
}

inline double l2_norm(const FunctionHandle& f, const Grid& grid) {
  return l2_error(f, constant_function(0.0, f.dim), grid);
}

/// <f, T_K> on a uniform-cube grid.
inline double trig_coefficient(const FunctionHandle& f, const MultiIndex& K, const Grid& grid) {
  require(grid.measure() == Measure::UniformCube, ErrorCode::WrongMeasure,
          "trigonometric coefficients need the uniform cube measure");
  return inner_product(f, basis_function(K), grid);
}

// ---------------------------------------------------------------------------
// One-dimensional integration

namespace detail {

inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct GkResult {
  double value;
  double error;  // |kronrod - gauss|
  double scale;  // kronrod estimate of the integral of |f|
};

template <class F>
GkResult gauss_kronrod15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  const double fc = f(c);
  double k = kKronrodWeights[7] * fc;
  double g = kGaussWeights[3] * fc;
  double m = kKronrodWeights[7] * std::abs(fc);
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kKronrodNodes[j];
    const double f1 = f(c - dx), f2 = f(c + dx);
    k += kKronrodWeights[j] * (f1 + f2);
    m += kKronrodWeights[j] * (std::abs(f1) + std::abs(f2));
    if (j % 2 == 1) g += kGaussWeights[j / 2] * (f1 + f2);
  }
  return {k * h, std::abs((k - g) * h), m * std::abs(h)};
}

// Stops at the tolerance or once the error is at rounding level for the piece.
template <class F>
double adaptive_gk(const F& f, double a, double b, double tol, int depth) {
  const auto [est, err, scale] = gauss_kronrod15(f, a, b);
  const bool rounding = err <= 100.0 * std::numeric_limits<double>::epsilon() * scale;
  if (err <= tol || rounding || depth <= 0 || b - a < 1e-14 * std::max(1.0, std::abs(a))) return est;
  const double m = 0.5 * (a + b);
  return adaptive_gk(f, a, m, 0.5 * tol, depth - 1) + adaptive_gk(f, m, b, 0.5 * tol, depth - 1);
}

inline std::vector<double> split_points(double a, double b, std::span<const double> breakpoints) {
  std::vector<double> pts{a};
  for (double p : breakpoints) {
    if (p > a && p < b) pts.push_back(p);
  }
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

}  // namespace detail

/// Adaptive Gauss-Kronrod (7/15) integral of f over [a, b]. Interior breakpoints
/// (kinks, jumps) are honoured by splitting there first.
template <class F>
double integrate_adaptive(const F& f, double a, double b, double abs_tol = 1e-12,
                          std::span<const double> breakpoints = {}) {
  const auto pts = detail::split_points(a, b, breakpoints);
  double total = 0.0;
  const double pieces = static_cast<double>(pts.size() - 1);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    total += detail::adaptive_gk(f, pts[i], pts[i + 1], abs_tol / pieces, 30);
  }
  return total;
}

/// Fixed n-point Gauss-Legendre on each piece of [a, b] cut at the breakpoints.
template <class F>
double integrate_gauss_legendre(const F& f, double a, double b, const GaussRule& rule,
                                std::span<const double> breakpoints = {}) {
  const auto pts = detail::split_points(a, b, breakpoints);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double c = 0.5 * (pts[i] + pts[i + 1]), h = 0.5 * (pts[i + 1] - pts[i]);
    double s = 0.0;
    // Rule weights are probability weights on [-1, 1]; the interval length is 2h.
    for (std::size_t j = 0; j < rule.nodes.size(); ++j) s += rule.weights[j] * f(c + h * rule.nodes[j]);
    total += 2.0 * h * s;
  }
  return total;
}

}  // namespace widthlab
