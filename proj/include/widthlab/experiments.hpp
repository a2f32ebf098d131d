#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "widthlab/error.hpp"
#include "widthlab/fitter.hpp"
#include "widthlab/hermite.hpp"
#include "widthlab/lattice.hpp"
#include "widthlab/lb_lab.hpp"
#include "widthlab/quadrature.hpp"
#include "widthlab/relu_features.hpp"
#include "widthlab/rng.hpp"
#include "widthlab/serialize.hpp"
#include "widthlab/trig_approx.hpp"
#include "widthlab/trig_basis.hpp"

namespace widthlab {

inline constexpr const char* kVersion = "0.1.0";

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {"count_lattice", "approx_trig",   "approx_sobolev",
                                                 "fit_curve",     "minwidth",      "lb_projection",
                                                 "lb_explicit",   "hermite_check", "mixture_check"};
  return kinds;
}

/// One parsed configuration document together with its original bytes.
struct ExperimentConfig {
  std::string text;
  json doc;
  std::string kind;
  std::string output_path;
};

struct RunOptions {
  std::string out_dir = ".";
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;
};

/// Everything a run produces before it touches the filesystem.
struct Outputs {
  json result;
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); }

inline void config_check(bool ok, const std::string& what) {
  if (!ok) config_error(what);
}

/// Typed, validated access to a JSON object. Greek-letter keys are accepted as
/// aliases for their spelled-out names.
class Params {
 public:
  Params(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    config_check(j_.is_object(), where_ + " must be a JSON object");
  }

  const json* find(const std::string& key) const {
    if (j_.contains(key)) return &j_.at(key);
    static const std::map<std::string, std::string> alias = {
        {"eps", "ε"}, {"ell", "ℓ"}, {"gamma", "γ"}, {"delta", "δ"}, {"rho", "ρ"}};
    const auto it = alias.find(key);
    if (it != alias.end() && j_.contains(it->second)) return &j_.at(it->second);
    return nullptr;
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  const json& at(const std::string& key) const {
    const json* v = find(key);
    if (!v) config_error(where_ + ": missing parameter \"" + key + "\"");
    return *v;
  }

  double num(const std::string& key) const {
    const json& v = at(key);
    config_check(v.is_number(), where_ + ": \"" + key + "\" must be a number");
    const double x = v.get<double>();
    config_check(std::isfinite(x), where_ + ": \"" + key + "\" must be finite");
    return x;
  }
  double num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }

  double positive(const std::string& key) const {
    const double x = num(key);
    config_check(x > 0.0, where_ + ": \"" + key + "\" must be > 0");
    return x;
  }
  double positive(const std::string& key, double fallback) const { return has(key) ? positive(key) : fallback; }

  std::int64_t integer(const std::string& key) const {
    const json& v = at(key);
    config_check(v.is_number_integer(), where_ + ": \"" + key + "\" must be an integer");
    return v.get<std::int64_t>();
  }
  std::int64_t integer(const std::string& key, std::int64_t fallback) const { return has(key) ? integer(key) : fallback; }

  std::int64_t integer_in(const std::string& key, std::int64_t lo, std::int64_t hi) const {
    const auto v = integer(key);
    config_check(v >= lo && v <= hi, where_ + ": \"" + key + "\" must lie in [" + std::to_string(lo) + ", " +
                                         std::to_string(hi) + "]");
    return v;
  }
  std::int64_t integer_in(const std::string& key, std::int64_t lo, std::int64_t hi, std::int64_t fallback) const {
    return has(key) ? integer_in(key, lo, hi) : fallback;
  }

  std::vector<double> num_list(const std::string& key) const {
    const json& v = at(key);
    std::vector<double> out;
    if (v.is_number()) {
      out.push_back(v.get<double>());
    } else {
      config_check(v.is_array() && !v.empty(), where_ + ": \"" + key + "\" must be a number or nonempty list");
      for (const auto& e : v) {
        config_check(e.is_number(), where_ + ": \"" + key + "\" entries must be numbers");
        out.push_back(e.get<double>());
      }
    }
    return out;
  }

  std::vector<std::int64_t> int_list(const std::string& key) const {
    const json& v = at(key);
    std::vector<std::int64_t> out;
    if (v.is_number_integer()) {
      out.push_back(v.get<std::int64_t>());
    } else {
      config_check(v.is_array() && !v.empty(), where_ + ": \"" + key + "\" must be an integer or nonempty list");
      for (const auto& e : v) {
        config_check(e.is_number_integer(), where_ + ": \"" + key + "\" entries must be integers");
        out.push_back(e.get<std::int64_t>());
      }
    }
    return out;
  }

  std::string str(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    config_check(v.is_string(), where_ + ": \"" + key + "\" must be a string");
    return v.get<std::string>();
  }

  const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
};

inline MultiIndex index_from_json(const json& v, std::size_t d, const std::string& where) {
  config_check(v.is_array() && v.size() == d, where + ": index must be a list of " + std::to_string(d) + " integers");
  std::vector<int> e;
  for (const auto& x : v) {
    config_check(x.is_number_integer(), where + ": index entries must be integers");
    e.push_back(x.get<int>());
  }
  return MultiIndex(std::move(e));
}

inline std::string index_cell(const MultiIndex& K) {
  std::string s;
  for (std::size_t i = 0; i < K.dim(); ++i) {
    if (i) s += ';';
    s += std::to_string(K[i]);
  }
  return s;
}

inline std::string int_cell(std::int64_t v) { return std::to_string(v); }

/// A target function described in the config, plus what is known about it.
struct TargetSpec {
  FunctionHandle f;
  std::optional<TrigPolynomial> trig;  // set when f is a trigonometric polynomial
  std::string description;
};

/// Builds the target f from either a shorthand string or an object with a "type".
inline TargetSpec parse_target(const json& spec, std::size_t d, const Params& top) {
  const std::string where = top.where() + ".f";
  std::string type;
  const json empty = json::object();
  const json* body = &empty;
  if (spec.is_string()) {
    type = spec.get<std::string>();
  } else {
    config_check(spec.is_object(), where + " must be a string or an object");
    config_check(spec.contains("type") && spec.at("type").is_string(), where + " needs a string \"type\"");
    type = spec.at("type").get<std::string>();
    body = &spec;
  }
  const Params p(*body, where);

  if (type == "zero") return {constant_function(0.0, d), TrigPolynomial(d), "zero"};
  if (type == "constant") {
    const double c = p.num("value");
    TrigPolynomial P(d);
    P.add(MultiIndex::zero(d), c);
    return {constant_function(c, d), P, "constant"};
  }
  if (type == "trig") {
    const double scale = p.num("scale", 1.0);
    config_check(scale > 0.0 && scale <= 1.0, where + ": scale must lie in (0, 1]");
    TrigPolynomial P(d, scale);
    const json& terms = p.at("terms");
    config_check(terms.is_array() && !terms.empty(), where + ": \"terms\" must be a nonempty list");
    for (const auto& t : terms) {
      const Params tp(t, where + ".terms");
      P.add(index_from_json(tp.at("K"), d, where), tp.num("beta"));
    }
    return {as_function(P), P, "trig"};
  }
  if (type == "explicit_hard") {
    const auto ell = static_cast<std::size_t>(
        p.has("ell") ? p.integer_in("ell", 1, static_cast<std::int64_t>(d))
                     : top.integer_in("ell", 1, static_cast<std::int64_t>(d)));
    const double eps = p.has("eps") ? p.positive("eps") : top.positive("eps");
    auto h = explicit_hard_function(eps, ell, d);
    TrigPolynomial P(d);
    P.add(h.index, 4.0 * eps);
    return {h.f, P, "explicit_hard(l=" + std::to_string(ell) + ")"};
  }
  if (type == "abs") {
    // (1/d) sum_i |x_i|, 1/sqrt(d)-Lipschitz.
    return {{[d](std::span<const double> x) {
               double s = 0.0;
               for (double v : x) s += std::abs(v);
               return s / static_cast<double>(d);
             },
             d},
            std::nullopt,
            "abs"};
  }
  if (type == "relu") {
    const auto w = p.num_list("weight");
    config_check(w.size() == d, where + ": weight must have d entries");
    double n2 = 0.0;
    for (double v : w) n2 += v * v;
    config_check(n2 > 0.0, where + ": weight must be nonzero");
    std::vector<double> u(w);
    for (double& v : u) v /= std::sqrt(n2);
    const ReluFeature g(p.num("bias", 0.0), u);
    return {{[g](std::span<const double> x) { return g(x); }, d}, std::nullopt, "relu"};
  }
  if (type == "sin_ridge") {
    const double L = p.positive("L");
    const auto v = p.num_list("direction");
    config_check(v.size() == d, where + ": direction must have d entries");
    return {{[v, L](std::span<const double> x) {
               double s = 0.0;
               for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * x[i];
               return std::sin(L * s);
             },
             d},
            std::nullopt,
            "sin_ridge"};
  }
  if (type == "hermite") {
    HermitePolynomial H(d);
    const json& terms = p.at("terms");
    config_check(terms.is_array() && !terms.empty(), where + ": \"terms\" must be a nonempty list");
    for (const auto& t : terms) {
      const Params tp(t, where + ".terms");
      const MultiIndex K = index_from_json(tp.at("K"), d, where);
      for (int v : K.entries()) config_check(v >= 0, where + ": Hermite indices must be >= 0");
      H.add(K, tp.num("beta"));
    }
    return {as_function(H), std::nullopt, "hermite"};
  }
  config_error(where + ": unknown function type \"" + type + "\"");
}

inline std::size_t dimension(const Params& p, std::int64_t max_d = 64) {
  return static_cast<std::size_t>(p.integer_in("d", 1, max_d));
}

inline std::uint64_t seed_of(const Params& p, const RunOptions& opt, bool required) {
  if (opt.seed) return *opt.seed;
  if (!p.has("seed")) {
    if (required) config_error(p.where() + ": \"seed\" is mandatory for stochastic experiments");
    return 0;
  }
  const auto s = p.integer("seed");
  config_check(s >= 0, p.where() + ": seed must be >= 0");
  return static_cast<std::uint64_t>(s);
}

/// Grid from the optional "grid" object, falling back to default_grid_spec.
inline QuadratureSpec grid_spec(const Params& p, Measure measure, std::size_t d, std::size_t r, std::size_t n_targets,
                                std::uint64_t seed) {
  QuadratureSpec spec = default_grid_spec(measure, d, r, n_targets, seed);
  spec.cap = default_cap();
  if (!p.has("grid")) return spec;
  const Params g(p.at("grid"), p.where() + ".grid");
  const std::string scheme = g.str("scheme", "tensor");
  if (scheme == "tensor") {
    spec.scheme = TensorGauss{static_cast<int>(g.integer_in("nodes", 1, 4096, 24))};
  } else if (scheme == "monte_carlo") {
    const auto samples = g.integer_in("samples", 1, std::int64_t{1} << 40, 10000);
    const auto s = g.integer("seed", static_cast<std::int64_t>(seed));
    config_check(s >= 0, g.where() + ": seed must be >= 0");
    spec.scheme = MonteCarlo{static_cast<std::size_t>(samples), static_cast<std::uint64_t>(s)};
  } else {
    config_error(g.where() + ": scheme must be \"tensor\" or \"monte_carlo\"");
  }
  return spec;
}

inline bool grid_is_random(const Params& p) {
  if (!p.has("grid")) return false;
  const Params g(p.at("grid"), p.where() + ".grid");
  return g.str("scheme", "tensor") == "monte_carlo";
}

inline void check_grid_cap(const QuadratureSpec& spec) {
  if (const auto* t = std::get_if<TensorGauss>(&spec.scheme)) {
    const long double total = std::pow(static_cast<long double>(t->nodes_per_dim), static_cast<long double>(spec.dim));
    require(total <= static_cast<long double>(spec.cap), ErrorCode::CapExceeded, "grid " + spec.id() + " exceeds cap");
  } else {
    require(std::get<MonteCarlo>(spec.scheme).sample_count <= spec.cap, ErrorCode::CapExceeded,
            "grid " + spec.id() + " exceeds cap");
  }
}

inline void check_ball_cap(double k, std::size_t d) {
  require(count_ball(k, d) <= default_cap(), ErrorCode::CapExceeded,
          "lattice ball of radius " + format_double(k) + " in dimension " + std::to_string(d) + " exceeds cap");
}

/// Feature distribution from the optional "dist" object; D_k with radius "k" by default.
inline ReluParamDist feature_dist(const Params& p, std::size_t d, bool build) {
  std::string type = "lattice";
  double k = p.positive("k", 2.0);
  double radius = 2.0 * std::sqrt(static_cast<double>(d));
  if (p.has("dist")) {
    const Params dp(p.at("dist"), p.where() + ".dist");
    type = dp.str("type", "lattice");
    if (type == "lattice") {
      k = dp.positive("k", k);
    } else if (type == "spherical") {
      radius = dp.positive("radius", radius);
    } else {
      config_error(dp.where() + ": type must be \"lattice\" or \"spherical\"");
    }
  }
  if (type == "lattice") {
    check_ball_cap(k, d);
    if (!build) return ReluParamDist::spherical(d, 1.0);
    return ReluParamDist::lattice(k, d);
  }
  return ReluParamDist::spherical(d, radius);
}

inline std::vector<std::size_t> widths(const Params& p, const std::string& key) {
  std::vector<std::size_t> out;
  for (auto r : p.int_list(key)) {
    config_check(r >= 1 && r <= (std::int64_t{1} << 24), p.where() + ": widths must lie in [1, 2^24]");
    out.push_back(static_cast<std::size_t>(r));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::size_t trials_of(const Params& p, std::int64_t fallback = 200) {
  return static_cast<std::size_t>(p.integer_in("trials", 1, 1000000, fallback));
}

using KindFn = std::function<Outputs(const Params&, const RunOptions&, bool)>;

// Each kind parses and validates its parameters first; with `dry` set it stops there.

inline Outputs kind_count_lattice(const Params& p, const RunOptions&, bool dry) {
  const auto ks = p.num_list("k");
  const auto ds = p.int_list("d");
  for (double k : ks) config_check(k >= 0.0 && k <= 1e6, p.where() + ": k must lie in [0, 1e6]");
  for (auto d : ds) config_check(d >= 1 && d <= 4096, p.where() + ": d must lie in [1, 4096]");
  Outputs out;
  if (dry) return out;
  CsvTable t({"k", "d", "count"});
  json rows = json::array();
  for (double k : ks) {
    for (auto d : ds) {
      const auto q = count_ball(k, static_cast<std::size_t>(d));
      t.row({format_double(k), int_cell(d), std::to_string(q)});
      json row = {{"k", k}, {"d", d}, {"count", q}};
      if (k >= 1.0) row["exponent_envelope"] = exponent_envelope(k, static_cast<std::size_t>(d));
      rows.push_back(row);
    }
  }
  out.result = {{"counts", rows}};
  out.files.emplace_back("counts.csv", t.str());
  return out;
}

inline std::string coefficient_csv(const TrigPolynomial& P, std::optional<int> sobolev_s = std::nullopt) {
  std::vector<std::string> header = {"K", "beta"};
  if (sobolev_s) header.push_back("c_ks");
  CsvTable t(header);
  for (const auto& [K, b] : P.terms()) {
    std::vector<std::string> row = {index_cell(K), format_double(b)};
    if (sobolev_s) row.push_back(format_double(c_ks(K, *sobolev_s)));
    t.row(row);
  }
  return t.str();
}

inline Outputs kind_approx_trig(const Params& p, const RunOptions& opt, bool dry) {
  const auto d = dimension(p, 20);
  const double L = p.positive("L");
  const double eps = p.positive("eps");
  const std::string mode = p.str("mode", "reflect");
  config_check(mode == "reflect" || mode == "periodic", p.where() + ": mode must be \"reflect\" or \"periodic\"");
  if (mode == "periodic") config_check(L / eps >= 2.0, p.where() + ": periodic truncation needs L / eps >= 2");
  if (mode == "reflect") config_check(L / eps >= 1.0, p.where() + ": reflection needs L / eps >= 1");
  const auto target = parse_target(p.at("f"), d, p);
  const auto seed = seed_of(p, opt, grid_is_random(p));
  const auto spec = grid_spec(p, Measure::UniformCube, d, 1, 1, seed);
  check_grid_cap(spec);
  const double k = mode == "periodic" ? L / (2.0 * eps) : L / eps;
  check_ball_cap(k, d);
  Outputs out;
  if (dry) return out;
  const Grid grid = make_grid(spec);
  const auto rep = mode == "periodic" ? truncate_periodic(target.f, L, eps, grid) : reflect_and_truncate(target.f, L, eps, grid);
  out.result = to_json(rep);
  out.result["mode"] = mode;
  out.result["ball_size"] = count_ball(k, d);
  out.result["target"] = target.description;
  out.result["grid"] = spec.id();
  out.files.emplace_back("coefficients.csv", coefficient_csv(rep.polynomial));
  return out;
}

inline Outputs kind_approx_sobolev(const Params& p, const RunOptions& opt, bool dry) {
  const auto d = dimension(p, 20);
  const int s = static_cast<int>(p.integer_in("s", 1, 64));
  const double gamma = p.positive("gamma");
  const double eps = p.positive("eps");
  const auto target = parse_target(p.at("f"), d, p);
  const auto seed = seed_of(p, opt, grid_is_random(p));
  const auto spec = grid_spec(p, Measure::UniformCube, d, 1, 1, seed);
  check_grid_cap(spec);
  const double k = sobolev_truncation_radius(s, gamma, eps);
  check_ball_cap(k, d);
  Outputs out;
  if (dry) return out;
  const Grid grid = make_grid(spec);
  const auto rep = truncate_sobolev(target.f, s, gamma, eps, grid);
  out.result = to_json(rep);
  out.result["sobolev_norm_of_truncation"] = sobolev_norm_from_coeffs(rep.polynomial, s);
  if (target.trig && target.trig->scale() == 1.0) {
    out.result["sobolev_norm_of_target"] = sobolev_norm_from_coeffs(*target.trig, s);
  }
  out.result["target"] = target.description;
  out.result["grid"] = spec.id();
  out.files.emplace_back("coefficients.csv", coefficient_csv(rep.polynomial, s));
  return out;
}

inline Outputs kind_fit_curve(const Params& p, const RunOptions& opt, bool dry) {
  const auto d = dimension(p);
  const double eps = p.num("eps");
  config_check(eps >= 0.0, p.where() + ": eps must be >= 0");
  const auto rs = widths(p, "r");
  const auto trials = trials_of(p);
  const auto seed = seed_of(p, opt, true);
  const auto target = parse_target(p.at("f"), d, p);
  const auto spec = grid_spec(p, Measure::UniformCube, d, rs.back(), 1, seed);
  check_grid_cap(spec);
  const auto dist = feature_dist(p, d, !dry);
  Outputs out;
  if (dry) return out;
  const Grid grid = make_grid(spec);
  std::vector<CurvePoint> curve;
  CsvTable res({"r", "trial", "residual"});
  json points = json::array();
  for (std::size_t r : rs) {
    const auto est = success_probability(target.f, eps, dist, r, trials, grid, seed, opt.threads);
    curve.push_back({static_cast<double>(r), est.probability, est.ci.lo, est.ci.hi});
    for (std::size_t t = 0; t < trials; ++t) res.row({std::to_string(r), std::to_string(t), format_double(est.residuals[t])});
    json j = to_json(est);
    j["r"] = r;
    points.push_back(j);
  }
  out.result = {{"curve", points}, {"target", target.description}, {"grid", spec.id()}, {"seed", seed}};
  out.files.emplace_back("success.csv", curve_csv(curve));
  out.files.emplace_back("residuals.csv", res.str());
  return out;
}

inline Outputs kind_minwidth(const Params& p, const RunOptions& opt, bool dry) {
  const auto d = dimension(p);
  const double eps = p.num("eps");
  config_check(eps >= 0.0, p.where() + ": eps must be >= 0");
  const double delta = p.num("delta");
  config_check(delta >= 0.0 && delta < 1.0, p.where() + ": delta must lie in [0, 1)");
  const auto trials = trials_of(p);
  const auto r_max = static_cast<std::size_t>(p.integer_in("r_max", 1, std::int64_t{1} << 24, 4096));
  const auto seed = seed_of(p, opt, true);
  const auto target = parse_target(p.at("f"), d, p);
  const auto spec = grid_spec(p, Measure::UniformCube, d, r_max, 1, seed);
  check_grid_cap(spec);
  const auto dist = feature_dist(p, d, !dry);
  Outputs out;
  if (dry) return out;
  const Grid grid = make_grid(spec);
  const auto est = estimate_minwidth(target.f, eps, delta, dist, grid, trials, r_max, seed, opt.threads);
  std::vector<CurvePoint> curve;
  for (const auto& t : est.search_trace) curve.push_back({static_cast<double>(t.r), t.success_prob, t.ci.lo, t.ci.hi});
  out.result = to_json(est);
  out.result["target"] = target.description;
  out.result["grid"] = spec.id();
  out.result["seed"] = seed;
  out.files.emplace_back("trace.csv", curve_csv(curve));
  return out;
}

inline Outputs kind_lb_projection(const Params& p, const RunOptions& opt, bool dry) {
  const auto d = dimension(p, 16);
  const std::string family_type = p.str("family", "symmetric");
  config_check(family_type == "symmetric" || family_type == "ball", p.where() + ": family must be \"symmetric\" or \"ball\"");
  std::size_t ell = 0;
  double k_family = 0.0;
  if (family_type == "symmetric") {
    ell = static_cast<std::size_t>(p.integer_in("ell", 1, static_cast<std::int64_t>(d)));
  } else {
    k_family = p.num("k_family");
    config_check(k_family >= 0.0, p.where() + ": k_family must be >= 0");
    check_ball_cap(k_family, d);
  }
  const auto rs = p.int_list("r");
  for (auto r : rs) config_check(r >= 0 && r <= 100000, p.where() + ": r must lie in [0, 100000]");
  const auto trials = trials_of(p);
  const auto seed = seed_of(p, opt, true);
  QuadratureSpec spec = grid_spec(p, Measure::UniformCube, d, static_cast<std::size_t>(*std::max_element(rs.begin(), rs.end())), 1, seed);
  if (!p.has("grid") && d == 4) spec.scheme = TensorGauss{12};
  check_grid_cap(spec);
  const auto dist = feature_dist(p, d, !dry);
  Outputs out;
  if (dry) return out;
  const Grid grid = make_grid(spec);
  const FunctionFamily fam = family_type == "symmetric" ? hard_family_symmetric(ell, d) : hard_family_ball(k_family, d);
  json summaries = json::array();
  for (auto r : rs) {
    const auto ex = run_projection_experiment(fam, dist, static_cast<std::size_t>(r), trials, grid, seed, opt.threads);
    CsvTable t({"trial", "member_label", "residual"});
    for (std::size_t tr = 0; tr < trials; ++tr) {
      for (std::size_t i = 0; i < fam.size(); ++i) t.row({std::to_string(tr), fam.labels[i], format_double(ex.residuals[tr][i])});
    }
    out.files.emplace_back("residuals_r" + std::to_string(r) + ".csv", t.str());
    json j = to_json(ex);
    j["labels"] = fam.labels;
    j["symmetric_at_3_sigma"] = ex.max_member_z <= 3.0;
    summaries.push_back(j);
  }
  out.result = {{"family", family_type}, {"N", fam.size()}, {"grid", spec.id()}, {"seed", seed}, {"summaries", summaries}};
  return out;
}

inline Outputs kind_lb_explicit(const Params& p, const RunOptions& opt, bool dry) {
  const auto d = dimension(p, 4096);
  const double L = p.positive("L");
  const double eps = p.positive("eps");
  const auto pairs = static_cast<std::size_t>(p.integer_in("pairs", 1, 100000000, 10000));
  const auto seed = seed_of(p, opt, true);
  const bool sobolev = p.has("gamma") || p.has("s");
  int s = 0;
  double gamma = 0.0;
  if (sobolev) {
    s = static_cast<int>(p.integer_in("s", 1, 64));
    gamma = p.positive("gamma");
    config_check(gamma * gamma / (eps * eps) >= 16.0 * (s + 1), p.where() + ": requires gamma^2 / eps^2 >= 16 (s + 1)");
  }
  const bool fit = p.has("r");
  std::vector<std::size_t> rs;
  std::size_t trials = 0;
  std::optional<QuadratureSpec> spec;
  if (fit) {
    config_check(d <= 64, p.where() + ": success probabilities need d <= 64");
    rs = widths(p, "r");
    trials = trials_of(p);
    spec = grid_spec(p, Measure::UniformCube, d, rs.back(), 1, seed);
    if (!p.has("grid") && d == 4) spec->scheme = TensorGauss{12};
    check_grid_cap(*spec);
  }
  const auto lb = lb_parameters(L, eps, d);
  std::optional<ReluParamDist> dist;
  if (fit) dist = feature_dist(p, d, !dry);
  Outputs out;
  if (dry) return out;

  CsvTable t({"quantity", "value"});
  out.result = {{"ell", lb.ell}, {"k_nonexplicit", lb.k}, {"degenerate", lb.degenerate}, {"seed", seed}};
  t.row({"ell", std::to_string(lb.ell)}).row({"k_nonexplicit", format_double(lb.k)});
  t.row({"degenerate", lb.degenerate ? "1" : "0"});
  t.row({"bound_quarter_binomial", format_double(0.25 * std::exp(std::lgamma(d + 1.0) - std::lgamma(lb.ell + 1.0) -
                                                                 std::lgamma(static_cast<double>(d - lb.ell) + 1.0)))});
  if (!lb.degenerate) {
    const auto hard = explicit_hard_function(eps, lb.ell, d);
    const double q = sampled_lipschitz_quotient(hard.f, pairs, seed);
    out.result["lip_bound"] = hard.lip_bound;
    out.result["lip_quotient"] = q;
    t.row({"lip_bound", format_double(hard.lip_bound)}).row({"lip_quotient", format_double(q)});
    if (fit) {
      const Grid grid = make_grid(*spec);
      json probs = json::array();
      for (std::size_t r : rs) {
        const auto est = success_probability(hard.f, eps, *dist, r, trials, grid, seed, opt.threads);
        json j = to_json(est);
        j["r"] = r;
        probs.push_back(j);
        t.row({"success_prob_r" + std::to_string(r), format_double(est.probability)});
        t.row({"success_ci_hi_r" + std::to_string(r), format_double(est.ci.hi)});
      }
      out.result["success"] = probs;
      out.result["grid"] = spec->id();
    }
  }
  if (sobolev) {
    const auto sp = sobolev_lb_parameters(gamma, eps, s, d);
    out.result["sobolev"] = {{"k", sp.k}, {"ell", sp.ell}, {"degenerate", sp.degenerate},
                             {"max_norm", sp.max_norm}, {"certified", sp.certified}};
    t.row({"sobolev_k", format_double(sp.k)}).row({"sobolev_ell", std::to_string(sp.ell)});
    t.row({"sobolev_max_norm", format_double(sp.max_norm)});
  }
  out.files.emplace_back("parameters.csv", t.str());
  return out;
}

inline Outputs kind_hermite_check(const Params& p, const RunOptions& opt, bool dry) {
  const auto d = dimension(p, 3);
  const int max_degree = static_cast<int>(p.integer_in("max_degree", 0, 40, 8));
  const int nodes = static_cast<int>(p.integer_in("nodes", 1, 400, 20));
  config_check(2 * nodes - 1 >= 2 * max_degree, p.where() + ": nodes too few to integrate degree-2*max_degree products");
  const int max_recurrence = static_cast<int>(p.integer_in("max_recurrence_degree", 1, kHermiteDegreeCap - 1, 20));
  const auto points = static_cast<std::size_t>(p.integer_in("points", 1, 1000000, 100));
  const auto seed = seed_of(p, opt, true);
  std::optional<TargetSpec> target;
  double L = 0.0, eps = 0.0;
  if (p.has("truncate")) {
    const Params tp(p.at("truncate"), p.where() + ".truncate");
    target = parse_target(tp.at("f"), d, tp);
    L = tp.positive("L");
    eps = tp.positive("eps");
    config_check(std::ceil(L * L / (eps * eps) - 1e-12) <= kHermiteDegreeCap, tp.where() + ": ceil(L^2 / eps^2) exceeds the degree cap");
  }
  QuadratureSpec spec;
  spec.measure = Measure::Gaussian;
  spec.dim = d;
  spec.scheme = TensorGauss{nodes};
  spec.cap = default_cap();
  check_grid_cap(spec);
  Outputs out;
  if (dry) return out;

  const Grid grid = make_grid(spec);
  const auto indices = enumerate_simplex(max_degree, d);
  std::vector<FunctionHandle> fns;
  for (const auto& K : indices) fns.push_back(hermite_function(K));
  const Eigen::MatrixXd F = function_matrix(fns, grid);
  Eigen::VectorXd w(F.rows());
  for (Eigen::Index i = 0; i < F.rows(); ++i) w[i] = grid.weight(static_cast<std::size_t>(i));
  const Eigen::MatrixXd gram = F.transpose() * w.asDiagonal() * F;
  const double ortho = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();

  Rng rng(seed);
  double rec = 0.0, deriv = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double z = rng.uniform(-4.0, 4.0);
    const auto h = h_table(max_recurrence + 1, z);
    for (int n = 1; n <= max_recurrence; ++n) {
      rec = std::max(rec, std::abs(std::sqrt(n + 1.0) * h[n + 1] - z * h[n] + std::sqrt(static_cast<double>(n)) * h[n - 1]));
      // h_n' from a 5-point stencil against sqrt(n) h_{n-1}
      const double step = 1e-3;
      const double fd = (-h_univariate(n, z + 2 * step) + 8 * h_univariate(n, z + step) - 8 * h_univariate(n, z - step) +
                         h_univariate(n, z - 2 * step)) / (12.0 * step);
      const double scale = std::max(1.0, std::abs(h[n - 1]) * std::sqrt(static_cast<double>(n)));
      deriv = std::max(deriv, std::abs(fd - std::sqrt(static_cast<double>(n)) * h[n - 1]) / scale);
    }
  }
  CsvTable t({"check", "value"});
  t.row({"orthonormality_max_dev", format_double(ortho)});
  t.row({"recurrence_max_residual", format_double(rec)});
  t.row({"derivative_fd_max_rel_dev", format_double(deriv)});
  out.result = {{"orthonormality_max_dev", ortho}, {"basis_size", indices.size()}, {"recurrence_max_residual", rec},
                {"derivative_fd_max_rel_dev", deriv}, {"grid", spec.id()}, {"seed", seed}};
  if (target) {
    const auto tr = hermite_truncate(target->f, L, eps, grid);
    out.result["truncation"] = {{"degree", tr.degree}, {"residual", tr.residual}, {"polynomial", to_json(tr.polynomial)}};
    t.row({"truncation_degree", std::to_string(tr.degree)}).row({"truncation_residual", format_double(tr.residual)});
  }
  out.files.emplace_back("checks.csv", t.str());
  return out;
}

inline Outputs kind_mixture_check(const Params& p, const RunOptions& opt, bool dry) {
  const auto d = dimension(p, 4);
  const double k = p.positive("k", 2.0);
  check_ball_cap(k, d);
  const double scale = p.num("scale", 1.0);
  config_check(scale > 0.0 && scale <= 1.0, p.where() + ": scale must lie in (0, 1]");
  const auto n_points = static_cast<std::size_t>(p.integer_in("points", 1, 100000, 50));
  const auto n_terms = static_cast<std::size_t>(p.integer_in("random_terms", 1, 1000, 4));
  const auto seed = seed_of(p, opt, true);
  std::optional<TrigPolynomial> given;
  if (p.has("f")) {
    auto t = parse_target(p.at("f"), d, p);
    config_check(t.trig.has_value(), p.where() + ": mixture_check needs a trigonometric target");
    config_check(t.trig->scale() == scale, p.where() + ": target scale must match \"scale\"");
    for (const auto& [K, b] : t.trig->terms()) config_check(in_ball(K, k), p.where() + ": target term outside the radius-k ball");
    given = *t.trig;
  }
  std::vector<std::size_t> rs;
  std::size_t repeats = 0;
  std::optional<QuadratureSpec> spec;
  if (p.has("r")) {
    rs = widths(p, "r");
    repeats = static_cast<std::size_t>(p.integer_in("repeats", 1, 10000, 20));
    spec = grid_spec(p, Measure::UniformCube, d, 1, 1, seed);
    check_grid_cap(*spec);
  }
  Outputs out;
  if (dry) return out;

  Rng rng(seed);
  TrigPolynomial P = given.value_or(TrigPolynomial(d, scale));
  if (!given) {
    const auto ball = enumerate_ball(k, d);
    const std::size_t m = std::min(n_terms, ball.size());
    std::vector<std::size_t> order(ball.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < m; ++i) std::swap(order[i], order[i + rng.uniform_index(order.size() - i)]);
    for (std::size_t i = 0; i < m; ++i) P.add(ball[order[i]], rng.uniform(-1.0, 1.0));
  }
  const MixtureWeight h(P, k);
  CsvTable t({"point", "target", "mixture", "abs_error"});
  double worst = 0.0;
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n_points; ++i) {
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    const double target = P.eval(x);
    const double mix = mixture_expectation(h, x);
    worst = std::max(worst, std::abs(target - mix));
    t.row({std::to_string(i), format_double(target), format_double(mix), format_double(std::abs(target - mix))});
  }
  out.result = {{"polynomial", to_json(P)}, {"k", k}, {"max_abs_error", worst}, {"seed", seed}};
  out.files.emplace_back("mixture.csv", t.str());

  if (!rs.empty()) {
    const Grid grid = make_grid(*spec);
    const auto dist = ReluParamDist::lattice(k, d);
    const double beta_bar = P.max_abs_coefficient();
    const double per_feature_bound = 360.0 * static_cast<double>(d) * beta_bar * k * k * h.ball_size();
    CsvTable sa({"r", "median_error", "max_abs_h", "per_feature_bound"});
    json rows = json::array();
    for (std::size_t r : rs) {
      std::vector<double> errs(repeats);
      double max_h = 0.0;
      for (std::size_t s = 0; s < repeats; ++s) {
        const auto net = sample_average_network(P, r, dist, trial_rng(seed, s).next_u64(), grid);
        errs[s] = net.l2_error;
        for (double c : net.coefficients) max_h = std::max(max_h, std::abs(c) * static_cast<double>(r));
      }
      std::sort(errs.begin(), errs.end());
      const double med = repeats % 2 ? errs[repeats / 2] : 0.5 * (errs[repeats / 2 - 1] + errs[repeats / 2]);
      sa.row({std::to_string(r), format_double(med), format_double(max_h), format_double(per_feature_bound)});
      rows.push_back({{"r", r}, {"median_error", med}, {"max_abs_h", max_h}});
    }
    out.result["sample_average"] = rows;
    out.result["per_feature_bound"] = per_feature_bound;
    out.result["grid"] = spec->id();
    out.files.emplace_back("sample_average.csv", sa.str());
  }
  return out;
}

inline const std::map<std::string, KindFn>& kind_table() {
  static const std::map<std::string, KindFn> table = {
      {"count_lattice", kind_count_lattice}, {"approx_trig", kind_approx_trig},
      {"approx_sobolev", kind_approx_sobolev}, {"fit_curve", kind_fit_curve},
      {"minwidth", kind_minwidth},           {"lb_projection", kind_lb_projection},
      {"lb_explicit", kind_lb_explicit},     {"hermite_check", kind_hermite_check},
      {"mixture_check", kind_mixture_check}};
  return table;
}

// Parameter errors raised by the library during validation are configuration errors.
template <class Fn>
auto as_config_error(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::ParameterOutOfRange:
      case ErrorCode::DimensionMismatch:
      case ErrorCode::UnsupportedCombination:
      case ErrorCode::WrongMeasure:
      case ErrorCode::NegativeIndex:
      case ErrorCode::ScaleNotUnit:
        throw Error(ErrorCode::ConfigInvalid, e.what());
      default:
        throw;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(std::string text) {
  ExperimentConfig cfg;
  cfg.text = std::move(text);
  try {
    cfg.doc = json::parse(cfg.text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  const detail::Params p(cfg.doc, "config");
  cfg.kind = p.str("kind", "");
  detail::config_check(detail::kind_table().count(cfg.kind) == 1, "config: unknown or missing \"kind\" \"" + cfg.kind + "\"");
  cfg.output_path = p.str("output_path", cfg.kind);
  detail::config_check(!cfg.output_path.empty(), "config: output_path must not be empty");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  return parse_config(std::move(text));
}

/// Checks every parameter against the preconditions of the operations it feeds.
inline void validate(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  detail::as_config_error([&] {
    const detail::Params p(cfg.doc, "config");
    detail::kind_table().at(cfg.kind)(p, opt, true);
    return 0;
  });
}

/// Runs the experiment without touching the filesystem.
inline Outputs execute(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  validate(cfg, opt);
  const detail::Params p(cfg.doc, "config");
  return detail::as_config_error([&] { return detail::kind_table().at(cfg.kind)(p, opt, false); });
}

struct RunSummary {
  std::filesystem::path directory;
  std::vector<std::filesystem::path> files;
  double wall_seconds = 0.0;
};

/// Runs the experiment and writes result.json, config.json (the input bytes) and
/// the CSV files under out_dir/output_path.
inline RunSummary run(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  Outputs outputs = execute(cfg, opt);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  RunSummary summary;
  summary.directory = std::filesystem::path(opt.out_dir) / cfg.output_path;
  std::error_code ec;
  std::filesystem::create_directories(summary.directory, ec);
  require(!ec, ErrorCode::IoError, "cannot create " + summary.directory.string() + ": " + ec.message());

  json doc;
  doc["kind"] = cfg.kind;
  doc["config_echo"] = cfg.text;
  doc["provenance"] = {{"widthlab_version", kVersion},
                       {"compiler", __VERSION__},
                       {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                             "." + std::to_string(EIGEN_MINOR_VERSION)},
                       {"json_version", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                       {"seed_override", opt.seed ? json(*opt.seed) : json(nullptr)},
                       {"threads", resolve_threads(opt.threads)},
                       {"cap", default_cap()},
                       {"wall_seconds", wall}};
  doc["result"] = outputs.result;
  json files = json::array();
  for (const auto& [name, contents] : outputs.files) {
    const auto path = summary.directory / name;
    write_text(path.string(), contents);
    summary.files.push_back(path);
    files.push_back(name);
  }
  doc["files"] = files;
  const auto cfg_path = summary.directory / "config.json";
  write_text(cfg_path.string(), cfg.text);
  const auto result_path = summary.directory / "result.json";
  write_text(result_path.string(), doc.dump(2) + "\n");
  summary.files.push_back(cfg_path);
  summary.files.push_back(result_path);
  summary.wall_seconds = wall;
  return summary;
}

/// Process exit status for an error code.
inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::CapExceeded:
    case ErrorCode::DegreeCap:
      return 3;
    case ErrorCode::NumericalFailure:
    case ErrorCode::PackingFailed:
    case ErrorCode::NotUnitNorm:
      return 4;
    default:
      return 2;
  }
}

}  // namespace widthlab
