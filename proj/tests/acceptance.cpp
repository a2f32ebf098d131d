#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "widthlab/experiments.hpp"

using namespace widthlab;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("[%s] %d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Every CSV an acceptance run produced, keyed by criterion and file name.
std::map<std::string, std::string> csv_log;

Outputs run_logged(const std::string& tag, const std::string& text, unsigned threads = 1) {
  RunOptions opt;
  opt.threads = threads;
  Outputs out = execute(parse_config(text), opt);
  for (const auto& [name, contents] : out.files) csv_log[tag + "/" + name] = contents;
  return out;
}

double direct_derivative(const MultiIndex& K, const MultiIndex& M, std::span<const double> x) {
  if (K.is_zero()) return M.l1_norm() == 0 ? 1.0 : 0.0;
  double theta = 0.0, scale = 1.0;
  for (std::size_t i = 0; i < K.dim(); ++i) {
    theta += kPi * K[i] * x[i];
    scale *= std::pow(kPi * K[i], M[i]);
  }
  const double shift = 0.5 * kPi * static_cast<double>(M.l1_norm());
  return kSqrt2 * scale * (classify(K) == IndexClass::Sin ? std::sin(theta + shift) : std::cos(theta + shift));
}

void orthonormality() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::size_t d = 1; d <= 3; ++d) {
    const Grid g = tensor_grid(Measure::UniformCube, d, 24);
    const auto ball = enumerate_ball(3, d);
    std::vector<std::vector<double>> vals(ball.size(), std::vector<double>(g.size()));
    for (std::size_t a = 0; a < ball.size(); ++a) {
      for (std::size_t i = 0; i < g.size(); ++i) vals[a][i] = eval_T(ball[a], g.node(i));
    }
    for (std::size_t a = 0; a < ball.size(); ++a) {
      for (std::size_t b = a; b < ball.size(); ++b) {
        worst = std::max(worst, std::abs(weighted_dot(vals[a], vals[b], g) - (a == b ? 1.0 : 0.0)));
      }
    }
  }
  const double secs = seconds_since(t0);
  report(1, worst <= 1e-9 && secs < 60.0, fmt("trig orthonormality, max deviation %.2e in %.2f s", worst, secs));
}

void lattice_counts() {
  bool exact = true, monotone = true;
  std::vector<double> ks;
  for (int i = 0; i <= 10; ++i) ks.push_back(0.5 * i);
  ks.push_back(std::sqrt(2.0));
  ks.push_back(std::sqrt(3.0));
  std::sort(ks.begin(), ks.end());
  for (std::size_t d = 1; d <= 6; ++d) {
    // histogram of squared norms over the box [-5, 5]^d
    std::vector<std::uint64_t> hist(26 * d, 0);
    std::vector<int> x(d, -5);
    while (true) {
      std::int64_t n2 = 0;
      for (int v : x) n2 += v * v;
      if (n2 < static_cast<std::int64_t>(hist.size())) ++hist[static_cast<std::size_t>(n2)];
      std::size_t j = 0;
      while (j < d && x[j] == 5) x[j++] = -5;
      if (j == d) break;
      ++x[j];
    }
    for (double k : ks) {
      std::uint64_t scan = 0;
      for (std::size_t n2 = 0; n2 < hist.size(); ++n2) {
        if (static_cast<double>(n2) <= k * k + 1e-9) scan += hist[n2];
      }
      exact = exact && scan == count_ball(k, d);
    }
  }
  for (std::size_t d = 1; d <= 6; ++d) {
    for (std::size_t i = 1; i < ks.size(); ++i) monotone = monotone && count_ball(ks[i], d) >= count_ball(ks[i - 1], d);
    for (double k : ks) monotone = monotone && (d == 1 || count_ball(k, d) >= count_ball(k, d - 1));
  }
  report(2, exact && monotone, std::string("count_ball vs box scan for d <= 6, k <= 5: ") + (exact ? "exact" : "MISMATCH") +
                                   ", monotone in k and d: " + (monotone ? "yes" : "NO"));
}

void mixture_exactness() {
  double worst = 0.0;
  for (std::size_t d = 1; d <= 3; ++d) {
    const Grid g = tensor_grid(Measure::UniformCube, d, d == 3 ? 5 : 8);
    for (const auto& K : enumerate_ball(3, d)) {
      for (double rho : {0.5, 1.0}) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const auto x = g.node(i);
          worst = std::max(worst, std::abs(relu_mixture_value(K, rho, x) - eval_T_scaled(K, x, rho)));
        }
      }
    }
  }
  report(3, worst <= 1e-6, fmt("ReLU mixture vs T_K(rho x), max error %.2e", worst));
}

void h_reconstruction() {
  Rng rng(2024);
  const auto ball = enumerate_ball(2, 2);
  double worst = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    TrigPolynomial P(2);
    for (int j = 0; j < 4; ++j) P.add(ball[rng.uniform_index(ball.size())], rng.uniform(-1.0, 1.0));
    const MixtureWeight h(P, 2.0);
    std::vector<double> x(2);
    for (int i = 0; i < 50; ++i) {
      x[0] = rng.uniform(-1.0, 1.0);
      x[1] = rng.uniform(-1.0, 1.0);
      worst = std::max(worst, std::abs(mixture_expectation(h, x) - P.eval(x)));
    }
  }
  report(4, worst <= 1e-5, fmt("E[h ReLU] vs P at 50 points x 3 polynomials, max error %.2e", worst));
}

const char* kConcentration = R"({"kind": "mixture_check", "d": 2, "k": 2, "points": 5, "seed": 41,
  "f": {"type": "trig", "terms": [{"K": [1, 1], "beta": 0.6}, {"K": [0, -2], "beta": -0.4}, {"K": [1, 0], "beta": 0.3}]},
  "r": [1024, 4096], "repeats": 20})";

void concentration() {
  const auto out = run_logged("5", kConcentration);
  const auto& rows = out.result.at("sample_average");
  const double m1024 = rows.at(0).at("median_error").get<double>();
  const double m4096 = rows.at(1).at("median_error").get<double>();
  const double bound = out.result.at("per_feature_bound").get<double>();
  double max_h = 0.0;
  for (const auto& r : rows) max_h = std::max(max_h, r.at("max_abs_h").get<double>());
  const double ratio = m4096 / (0.5 * m1024);
  const bool ok = ratio <= 1.5 && ratio >= 1.0 / 1.5 && max_h <= bound;
  report(5, ok,
         fmt("median error r=1024 %.4g, r=4096 %.4g", m1024, m4096) + fmt(", ratio to half %.3f", ratio) +
             fmt(", max |h| %.4g <= %.4g", max_h, bound));
}

void truncation() {
  TrigPolynomial f(2);
  f.add({1, 0}, 0.7).add({0, -1}, 0.2).add({2, 2}, 0.3).add({-3, 0}, -0.1).add({1, -1}, 0.05);
  const Grid g = tensor_grid(Measure::UniformCube, 2, 24);
  const auto rep = truncate_periodic(as_function(f), 4.0, 1.0, g);
  const double tail = 0.3 * 0.3 + 0.1 * 0.1;
  const double dev = std::abs(rep.residual_estimate * rep.residual_estimate - tail);

  const FunctionHandle absf{[](std::span<const double> x) { return std::abs(x[0]); }, 1};
  const auto abs_rep = reflect_and_truncate(absf, 1.0, 0.25, tensor_grid(Measure::UniformCube, 1, 24));
  report(6, dev <= 1e-9 && abs_rep.residual_estimate <= 0.25,
         fmt("Parseval tail deviation %.2e; |x| reflected residual %.4g <= 0.25", dev, abs_rep.residual_estimate));
}

void sobolev_identity() {
  Rng rng(77);
  double worst = 0.0;
  for (std::size_t d = 1; d <= 2; ++d) {
    const Grid g = tensor_grid(Measure::UniformCube, d, 24);
    for (int rep = 0; rep < 3; ++rep) {
      TrigPolynomial P(d);
      for (const auto& K : enumerate_ball(3, d)) {
        if (rng.uniform() < 0.5) P.add(K, rng.uniform(-1.0, 1.0));
      }
      for (int s = 1; s <= 2; ++s) {
        double total = 0.0;
        for (const auto& M : enumerate_simplex(s, d)) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            double v = 0.0;
            for (const auto& [K, b] : P.terms()) v += b * direct_derivative(K, M, g.node(i));
            total += g.weight(i) * v * v;
          }
        }
        const double direct = std::sqrt(total);
        worst = std::max(worst, std::abs(sobolev_norm_from_coeffs(P, s) - direct) / std::max(1.0, direct));
      }
    }
  }
  std::size_t violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t d = 1 + rng.uniform_index(4);
    MultiIndex K = MultiIndex::zero(d);
    for (std::size_t i = 0; i < d; ++i) K[i] = static_cast<int>(rng.uniform_index(11)) - 5;
    const int s = 1 + static_cast<int>(rng.uniform_index(4));
    const double lower = std::pow(kPi * kPi * static_cast<double>(K.l2_norm_sq()) / s, s);
    if (c_ks(K, s) < lower * (1.0 - 1e-12)) ++violations;
  }
  report(7, worst <= 1e-8 && violations == 0,
         fmt("coefficient vs derivative-quadrature Sobolev norm, max rel deviation %.2e; c_ks lower bound violations %.0f/1000",
             worst, static_cast<double>(violations)));
}

const char* kProjection = R"({"kind": "lb_projection", "d": 4, "family": "symmetric", "ell": 2, "k": 2,
  "r": [1, 2, 3], "trials": 200, "seed": 3})";

void lower_bound() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = run_logged("8", kProjection);
  const double secs = seconds_since(t0);
  bool ok = out.result.at("N").get<std::size_t>() == 6 && secs < 300.0;
  std::string detail;
  for (const auto& s : out.result.at("summaries")) {
    const auto r = s.at("r").get<double>();
    const double mean = s.at("mean_residual").get<double>();
    const double z = s.at("max_member_z").get<double>();
    ok = ok && mean >= 1.0 - r / 6.0 - 0.02 && z <= 3.0;
    detail += fmt("r=%.0f mean %.5f max|z| %.2f; ", r, mean, z);
  }
  report(8, ok, detail + fmt("N=6, %.1f s", secs));
}

const char* kExplicit = R"({"kind": "lb_explicit", "d": 4, "L": 18, "eps": 0.1, "pairs": 100000,
  "r": [1], "trials": 200, "seed": 5})";

void explicit_hard() {
  const auto out = run_logged("9", kExplicit);
  const auto ell = out.result.at("ell").get<std::size_t>();
  const auto& s = out.result.at("success").at(0);
  const double p = s.at("probability").get<double>();
  const double hi = s.at("ci_hi").get<double>();
  const double q = out.result.at("lip_quotient").get<double>();
  const double bound = 4.0 * kPi * 0.1 * 2.0;
  report(9, ell == 2 && hi < 0.5 && q <= bound + 1e-9,
         fmt("p(r=1) %.3f, Wilson upper %.4f < 0.5", p, hi) + fmt("; Lipschitz quotient %.5f <= %.5f", q, bound));
}

void hermite_suite() {
  double ortho = 0.0;
  for (std::size_t d = 1; d <= 3; ++d) {
    const Grid g = tensor_grid(Measure::Gaussian, d, 12);
    const auto idx = enumerate_simplex(8, d);
    std::vector<std::vector<double>> vals(idx.size(), std::vector<double>(g.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t i = 0; i < g.size(); ++i) vals[a][i] = H_multivariate(idx[a], g.node(i));
    }
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a; b < idx.size(); ++b) {
        ortho = std::max(ortho, std::abs(weighted_dot(vals[a], vals[b], g) - (a == b ? 1.0 : 0.0)));
      }
    }
  }

  Rng rng(9);
  double rec = 0.0, deriv = 0.0;
  for (int t = 0; t < 200; ++t) {
    const double z = rng.uniform(-3.0, 3.0);
    const auto h = h_table(21, z);
    for (int n = 1; n <= 20; ++n) {
      rec = std::max(rec, std::abs(std::sqrt(n + 1.0) * h[n + 1] - z * h[n] + std::sqrt(1.0 * n) * h[n - 1]));
    }
    // derivative of sum_n a_n h_n against the shifted coefficients, by Richardson-extrapolated differences
    for (int n = 1; n <= 8; ++n) {
      auto central = [&](double step) { return (h_univariate(n, z + step) - h_univariate(n, z - step)) / (2 * step); };
      const double fd = (4.0 * central(1e-3) - central(2e-3)) / 3.0;
      const double exact = hermite_partial(MultiIndex({n}), 0).coeff * h[n - 1];
      deriv = std::max(deriv, std::abs(fd - exact) / std::max(1.0, std::abs(exact)));
    }
  }

  const Grid g2 = tensor_grid(Measure::Gaussian, 2, 12);
  const FunctionHandle H31 = hermite_function({3, 1});
  double tbt = 0.0;
  HermitePolynomial alpha(2);
  for (const auto& K : enumerate_simplex(6, 2)) alpha.add(K, inner_product(H31, hermite_function(K), g2));
  for (std::size_t i = 0; i < 2; ++i) {
    const auto beta = term_by_term_coeffs(alpha, i);
    // quadrature coefficients of the exact partial derivative
    const FunctionHandle dH{[i](std::span<const double> x) {
                              const DerivedTerm t = hermite_partial({3, 1}, i);
                              return t.coeff * H_multivariate(t.index, x);
                            },
                            2};
    for (const auto& K : enumerate_simplex(5, 2)) {
      tbt = std::max(tbt, std::abs(beta.coefficient(K) - inner_product(dH, hermite_function(K), g2)));
    }
  }

  const auto in_range = hermite_truncate(H31, 2.0, 1.0, g2);  // degree 4
  const auto out_range = hermite_truncate(hermite_function({4, 1}), 2.0, 1.0, g2);
  const double in_res = in_range.residual;
  const double out_res = out_range.residual;
  const bool trunc_ok = std::abs(in_range.polynomial.coefficient({3, 1}) - 1.0) <= 1e-8 && in_res <= 1e-8 &&
                        std::abs(out_res - 1.0) <= 1e-8;

  const bool ok = ortho <= 1e-8 && rec <= 1e-9 && deriv <= 1e-9 && tbt <= 1e-8 && trunc_ok;
  report(10, ok,
         fmt("orthonormality %.2e, recurrence %.2e, derivative %.2e", ortho, rec, deriv) +
             fmt(", term-by-term %.2e, truncation residuals %.2e / %.12f", tbt, in_res, out_res));
}

void determinism() {
  const std::map<std::string, std::string> first = csv_log;
  csv_log.clear();
  run_logged("5", kConcentration, 2);
  run_logged("8", kProjection, 2);
  run_logged("9", kExplicit, 2);
  run_logged("fit", R"({"kind": "fit_curve", "d": 2, "k": 2, "eps": 0.1, "r": [1, 4, 16], "trials": 30, "seed": 7,
    "f": {"type": "trig", "terms": [{"K": [1, 1], "beta": 0.4}]}})");
  run_logged("minwidth", R"({"kind": "minwidth", "d": 2, "k": 2, "eps": 0.1, "delta": 0.2, "trials": 30,
    "r_max": 256, "seed": 11, "f": {"type": "explicit_hard", "ell": 1}})");
  const auto second = csv_log;
  csv_log.clear();
  run_logged("fit", R"({"kind": "fit_curve", "d": 2, "k": 2, "eps": 0.1, "r": [1, 4, 16], "trials": 30, "seed": 7,
    "f": {"type": "trig", "terms": [{"K": [1, 1], "beta": 0.4}]}})", 3);
  run_logged("minwidth", R"({"kind": "minwidth", "d": 2, "k": 2, "eps": 0.1, "delta": 0.2, "trials": 30,
    "r_max": 256, "seed": 11, "f": {"type": "explicit_hard", "ell": 1}})", 3);

  std::size_t compared = 0, differing = 0;
  for (const auto& [name, contents] : second) {
    const auto a = first.find(name);
    const auto b = csv_log.find(name);
    if (a != first.end()) {
      ++compared;
      if (a->second != contents) ++differing;
    }
    if (b != csv_log.end()) {
      ++compared;
      if (b->second != contents) ++differing;
    }
  }
  report(11, compared >= 8 && differing == 0,
         fmt("%.0f CSV comparisons across repeated seeded runs, %.0f differ", static_cast<double>(compared),
             static_cast<double>(differing)));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria = {orthonormality, lattice_counts, mixture_exactness, h_reconstruction,
                                                       concentration,  truncation,     sobolev_identity,  lower_bound,
                                                       explicit_hard,  hermite_suite,  determinism};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i) + 1, false, std::string("threw ") + e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
