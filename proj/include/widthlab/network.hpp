#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "widthlab/error.hpp"
#include "widthlab/lattice.hpp"

namespace widthlab {

/// One bottom-layer gate x -> ReLU(<w, x> - b) with ||w||_2 = 1.
struct ReluFeature {
  double bias = 0.0;
  std::vector<double> weight;

  ReluFeature() = default;
  ReluFeature(double b, std::vector<double> w) : bias(b), weight(std::move(w)) {
    double n2 = 0.0;
    for (double v : weight) n2 += v * v;
    require(std::abs(std::sqrt(n2) - 1.0) <= 1e-12, ErrorCode::ParameterOutOfRange,
            "ReLU weight must be a unit vector");
  }

  std::size_t dim() const { return weight.size(); }

  double preactivation(std::span<const double> x) const {
    double s = -bias;
    for (std::size_t i = 0; i < weight.size(); ++i) s += weight[i] * x[i];
    return s;
  }

  double operator()(std::span<const double> x) const { return std::max(0.0, preactivation(x)); }
};

/// K / ||K||_2, or 1/sqrt(d) for K = 0.
inline std::vector<double> direction_of(const MultiIndex& K) {
  const std::size_t d = K.dim();
  std::vector<double> w(d);
  if (K.is_zero()) {
    std::fill(w.begin(), w.end(), 1.0 / std::sqrt(static_cast<double>(d)));
    return w;
  }
  const double n = K.l2_norm();
  for (std::size_t i = 0; i < d; ++i) w[i] = K[i] / n;
  return w;
}

/// A depth-2 random-bottom-layer network: features, top-layer coefficients and
/// the residual measured on the grid identified by `grid_id`.
struct FittedSpan {
  std::vector<ReluFeature> features;
  std::vector<double> coefficients;
  double l2_error = 0.0;
  std::string grid_id;

  double operator()(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t j = 0; j < features.size(); ++j) s += coefficients[j] * features[j](x);
    return s;
  }
};

}  // namespace widthlab
