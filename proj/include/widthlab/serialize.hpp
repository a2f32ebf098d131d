#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "widthlab/error.hpp"
#include "widthlab/fitter.hpp"
#include "widthlab/hermite.hpp"
#include "widthlab/lb_lab.hpp"
#include "widthlab/network.hpp"
#include "widthlab/trig_approx.hpp"
#include "widthlab/trig_basis.hpp"

namespace widthlab {

using json = nlohmann::json;

/// Shortest round-trip-safe rendering with 17 significant digits.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json to_json(const MultiIndex& K) { return K.entries(); }

inline json to_json(const TrigPolynomial& P) {
  json terms = json::array();
  for (const auto& [K, beta] : P.terms()) terms.push_back({{"K", K.entries()}, {"beta", beta}});
  return {{"basis", "trig"}, {"dim", P.dim()}, {"scale", P.scale()}, {"terms", terms}};
}

inline TrigPolynomial trig_polynomial_from_json(const json& j) {
  TrigPolynomial P(j.at("dim").get<std::size_t>(), j.value("scale", 1.0));
  for (const auto& t : j.at("terms")) P.add(MultiIndex(t.at("K").get<std::vector<int>>()), t.at("beta").get<double>());
  return P;
}

inline json to_json(const HermitePolynomial& P) {
  json terms = json::array();
  for (const auto& [K, alpha] : P.terms()) terms.push_back({{"K", K.entries()}, {"beta", alpha}});
  return {{"basis", "hermite"}, {"dim", P.dim()}, {"terms", terms}};
}

inline json to_json(const TruncationReport& r) {
  json j = {{"polynomial", to_json(r.polynomial)},
            {"degree_radius", r.degree_radius},
            {"residual_estimate", r.residual_estimate},
            {"max_coefficient", r.max_coefficient}};
  if (r.orthant) j["orthant"] = *r.orthant;
  return j;
}

inline json to_json(const FittedSpan& s) {
  json features = json::array();
  for (const auto& g : s.features) features.push_back({{"bias", g.bias}, {"weight", g.weight}});
  return {{"features", features}, {"coefficients", s.coefficients}, {"l2_error", s.l2_error}, {"grid_id", s.grid_id}};
}

inline json to_json(const SuccessEstimate& s) {
  return {{"probability", s.probability}, {"ci_lo", s.ci.lo}, {"ci_hi", s.ci.hi},
          {"successes", s.successes},     {"trials", s.trials}};
}

inline json to_json(const MinWidthEstimate& m) {
  json trace = json::array();
  for (const auto& p : m.search_trace) {
    trace.push_back({{"r", p.r}, {"success_prob", p.success_prob}, {"ci_lo", p.ci.lo}, {"ci_hi", p.ci.hi}});
  }
  return {{"r_hat", m.r_hat}, {"success_prob_at_r_hat", m.success_prob_at_r_hat},
          {"trials", m.trials}, {"eps", m.eps}, {"delta", m.delta}, {"search_trace", trace}};
}

inline json to_json(const ProjectionReport& p) {
  return {{"residuals", p.residuals}, {"mean_residual", p.mean_residual}, {"r", p.r},
          {"N", p.N}, {"bound", p.bound}, {"captured", p.captured}};
}

inline json to_json(const ProjectionExperiment& e) {
  return {{"r", e.r},
          {"N", e.N},
          {"trials", e.trials},
          {"kappa", e.kappa},
          {"bound", e.bound},
          {"mean_residual", e.mean_residual},
          {"mean_std_error", e.mean_std_error},
          {"member_means", e.member_means},
          {"max_member_z", e.max_member_z},
          {"max_captured", e.max_captured}};
}

/// Writes `text` to `path`, throwing IoError on failure.
inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path + " for writing");
  out << text;
  out.flush();
  require(static_cast<bool>(out), ErrorCode::IoError, "failed writing " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Quotes cells that contain separators or quotes.
inline std::string csv_cell(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string q = "\"";
  for (char c : cell) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

/// CSV with a header row; numeric cells use format_double.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row(const std::vector<std::string>& cells) {
    require(cells.size() == header_.size(), ErrorCode::DimensionMismatch, "CSV row width does not match header");
    rows_.push_back(cells);
    return *this;
  }

  std::size_t size() const { return rows_.size(); }

  std::string str() const {
    std::string s;
    auto line = [&s](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += csv_cell(cells[i]);
      }
      s += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return s;
  }

  void write(const std::string& path) const { write_text(path, str()); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

inline std::string curve_csv(const std::vector<CurvePoint>& points) {
  require(!points.empty(), ErrorCode::ParameterOutOfRange, "curve must have at least one point");
  CsvTable t({"x", "y", "ci_lo", "ci_hi"});
  for (const auto& p : points) t.row({format_double(p.x), format_double(p.y), format_double(p.ci_lo), format_double(p.ci_hi)});
  return t.str();
}

inline void emit_curve(const std::vector<CurvePoint>& points, const std::string& path) {
  write_text(path, curve_csv(points));
}

inline std::vector<CurvePoint> parse_curve(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == "x,y,ci_lo,ci_hi", ErrorCode::IoError,
          "curve CSV header missing");
  std::vector<CurvePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    CurvePoint p;
    require(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &p.x, &p.y, &p.ci_lo, &p.ci_hi) == 4, ErrorCode::IoError,
            "malformed curve row: " + line);
    out.push_back(p);
  }
  return out;
}

inline std::vector<CurvePoint> read_curve(const std::string& path) { return parse_curve(read_text(path)); }

}  // namespace widthlab
