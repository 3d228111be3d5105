#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "wcluster/common.hpp"

namespace wcluster {

struct DensityGrid {
  Eigen::VectorXd x;
  Eigen::VectorXd density;
  double bandwidth = 0;
};

namespace detail {

inline double weighted_quantile(const std::vector<std::pair<double, double>>& sorted_vw, double q) {
  double acc = 0;
  for (const auto& [v, w] : sorted_vw) {
    acc += w;
    if (acc >= q) return v;
  }
  return sorted_vw.back().first;
}

}  // namespace detail

// Weighted 1-d Gaussian KDE on a uniform grid. Bandwidth follows the usual
// rule of thumb 0.9 min(sd, IQR/1.34) n_eff^(-1/5), with fallbacks so a
// degenerate sample still yields a proper density.
inline DensityGrid kde_1d(const Eigen::VectorXd& values, const Eigen::VectorXd& weights, int grid_size = 512) {
  if (values.size() == 0) throw ValidationError("kde needs at least one value");
  if (values.size() != weights.size()) throw ValidationError("kde values/weights mismatch");
  if (grid_size < 2) throw ValidationError("kde grid needs at least two points");
  if (!values.allFinite() || !weights.allFinite()) throw ValidationError("kde inputs must be finite");
  double total = weights.sum();
  if (!(total > 0)) throw ValidationError("kde weights must have positive mass");
  Eigen::VectorXd w = weights / total;

  double mean = values.dot(w);
  double var = ((values.array() - mean).square() * w.array()).sum();
  double sd = std::sqrt(std::max(var, 0.0));
  double neff = 1.0 / w.array().square().sum();

  std::vector<std::pair<double, double>> sorted_vw(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) sorted_vw[i] = {values[i], w[i]};
  std::sort(sorted_vw.begin(), sorted_vw.end());
  double iqr = detail::weighted_quantile(sorted_vw, 0.75) - detail::weighted_quantile(sorted_vw, 0.25);

  double spread = sd;
  if (iqr > 0) spread = std::min(sd, iqr / 1.34);
  if (spread <= 0) spread = std::max({sd, std::abs(mean) * 0.1, 1e-9});
  double bw = 0.9 * spread * std::pow(neff, -0.2);
  if (!(bw > 0)) bw = 1e-9;

  double lo = values.minCoeff() - 3 * bw;
  double hi = values.maxCoeff() + 3 * bw;
  DensityGrid grid;
  grid.bandwidth = bw;
  grid.x = Eigen::VectorXd::LinSpaced(grid_size, lo, hi);
  grid.density = Eigen::VectorXd::Zero(grid_size);
  const double norm = 1.0 / (bw * std::sqrt(2.0 * M_PI));
  for (int g = 0; g < grid_size; ++g) {
    double s = 0;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      double z = (grid.x[g] - values[i]) / bw;
      s += w[i] * std::exp(-0.5 * z * z);
    }
    grid.density[g] = s * norm;
  }
  return grid;
}

}  // namespace wcluster
