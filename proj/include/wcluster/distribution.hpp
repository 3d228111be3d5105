#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <unordered_map>
#include <vector>

#include "wcluster/common.hpp"

namespace wcluster {

namespace detail {

// Bitwise row key; -0.0 is folded onto +0.0 so coincident points never appear
// as distinct support rows.
inline std::uint64_t row_hash(const double* row, int d) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int j = 0; j < d; ++j) {
    double x = row[j] == 0.0 ? 0.0 : row[j];
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

inline bool rows_equal(const double* a, const double* b, int d) {
  for (int j = 0; j < d; ++j) {
    double x = a[j] == 0.0 ? 0.0 : a[j];
    double y = b[j] == 0.0 ? 0.0 : b[j];
    if (std::memcmp(&x, &y, sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace detail

// Finitely supported probability measure on R^d: distinct support points with
// strictly positive weights summing to one.
class EmpiricalDistribution {
 public:
  EmpiricalDistribution(Eigen::MatrixXd support, Eigen::VectorXd weights)
      : support_(std::move(support)), weights_(std::move(weights)) {
    validate();
  }

  // Equal-weight atoms at the sample rows; duplicate rows are merged with
  // their weights summed.
  static EmpiricalDistribution from_samples(const Eigen::MatrixXd& samples) {
    if (samples.rows() == 0) throw ValidationError("empty sample set");
    Eigen::VectorXd w = Eigen::VectorXd::Constant(samples.rows(), 1.0 / static_cast<double>(samples.rows()));
    return from_points(samples, w);
  }

  // General weighted atoms; merges duplicates and renormalizes.
  static EmpiricalDistribution from_points(const Eigen::MatrixXd& points, const Eigen::VectorXd& weights) {
    if (points.rows() == 0) throw ValidationError("empty sample set");
    if (points.rows() != weights.size()) throw ValidationError("points/weights length mismatch");
    const int d = static_cast<int>(points.cols());
    const Eigen::Index n = points.rows();

    std::unordered_map<std::uint64_t, std::vector<Eigen::Index>> buckets;
    buckets.reserve(static_cast<std::size_t>(n) * 2);
    std::vector<Eigen::Index> order;
    std::vector<double> mass;
    order.reserve(n);
    Eigen::MatrixXd rows(n, d);
    Eigen::Index unique = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::RowVectorXd r = points.row(i);
      std::uint64_t h = detail::row_hash(r.data(), d);
      auto& slot = buckets[h];
      Eigen::Index found = -1;
      for (Eigen::Index idx : slot) {
        Eigen::RowVectorXd cand = rows.row(idx);
        if (detail::rows_equal(cand.data(), r.data(), d)) {
          found = idx;
          break;
        }
      }
      if (found < 0) {
        rows.row(unique) = r;
        slot.push_back(unique);
        order.push_back(unique);
        mass.push_back(weights[i]);
        ++unique;
      } else {
        mass[static_cast<std::size_t>(found)] += weights[i];
      }
    }
    Eigen::MatrixXd support = rows.topRows(unique);
    Eigen::VectorXd w(unique);
    for (Eigen::Index i = 0; i < unique; ++i) w[i] = mass[static_cast<std::size_t>(i)];
    double total = w.sum();
    if (!(total > 0)) throw ValidationError("weights must have positive total mass");
    w /= total;
    return EmpiricalDistribution(std::move(support), std::move(w));
  }

  int size() const { return static_cast<int>(support_.rows()); }
  int dim() const { return static_cast<int>(support_.cols()); }
  const Eigen::MatrixXd& support() const { return support_; }
  const Eigen::VectorXd& weights() const { return weights_; }

  Eigen::VectorXd mean() const { return support_.transpose() * weights_; }

 private:
  void validate() {
    if (support_.rows() == 0) throw ValidationError("empty support");
    if (support_.cols() == 0) throw ValidationError("support dimension must be positive");
    if (support_.rows() != weights_.size()) throw ValidationError("support/weights length mismatch");
    if (!support_.allFinite()) throw ValidationError("non-finite support coordinate");
    if (!weights_.allFinite()) throw ValidationError("non-finite weight");
    if ((weights_.array() <= 0).any()) throw ValidationError("weights must be strictly positive");
    double total = weights_.sum();
    if (std::abs(total - 1.0) > 1e-12) throw ValidationError("weights must sum to 1 (got " + format_double(total) + ")");
    weights_ /= total;
    const int d = dim();
    std::unordered_map<std::uint64_t, std::vector<Eigen::Index>> buckets;
    for (Eigen::Index i = 0; i < support_.rows(); ++i) {
      Eigen::RowVectorXd r = support_.row(i);
      auto& slot = buckets[detail::row_hash(r.data(), d)];
      for (Eigen::Index idx : slot) {
        Eigen::RowVectorXd other = support_.row(idx);
        if (detail::rows_equal(other.data(), r.data(), d))
          throw ValidationError("duplicate support points; merge them first");
      }
      slot.push_back(i);
    }
  }

  Eigen::MatrixXd support_;
  Eigen::VectorXd weights_;
};

// Per-coordinate affine map (x - center) / scale shared by a set of
// distributions, fitted on their pooled weighted moments.
struct NormalizationParams {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;

  EmpiricalDistribution apply(const EmpiricalDistribution& dist) const {
    check_dim(dist.dim());
    Eigen::MatrixXd s = dist.support();
    for (int j = 0; j < s.cols(); ++j) s.col(j) = (s.col(j).array() - center[j]) / scale[j];
    return EmpiricalDistribution(std::move(s), dist.weights());
  }

  EmpiricalDistribution invert(const EmpiricalDistribution& dist) const {
    check_dim(dist.dim());
    Eigen::MatrixXd s = dist.support();
    for (int j = 0; j < s.cols(); ++j) s.col(j) = s.col(j).array() * scale[j] + center[j];
    return EmpiricalDistribution(std::move(s), dist.weights());
  }

  Eigen::VectorXd invert_point(const Eigen::VectorXd& x) const {
    check_dim(static_cast<int>(x.size()));
    return (x.array() * scale.array() + center.array()).matrix();
  }

 private:
  void check_dim(int d) const {
    if (d != center.size()) throw ValidationError("normalization dimension mismatch");
  }
};

// Pooled z-score parameters: every distribution contributes with equal weight,
// each of its atoms with its own weight. Coordinates with (almost) zero pooled
// variance keep scale 1.
inline NormalizationParams fit_normalization(const std::vector<EmpiricalDistribution>& dists) {
  if (dists.empty()) throw ValidationError("cannot fit normalization on an empty set");
  const int d = dists[0].dim();
  for (const auto& dist : dists)
    if (dist.dim() != d) throw ValidationError("normalization requires a common dimension");
  const double nd = static_cast<double>(dists.size());
  Eigen::VectorXd center = Eigen::VectorXd::Zero(d);
  for (const auto& dist : dists) center += dist.mean() / nd;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (const auto& dist : dists) {
    Eigen::MatrixXd delta = dist.support().rowwise() - center.transpose();
    var += (delta.array().square().matrix().transpose() * dist.weights()) / nd;
  }
  Eigen::VectorXd scale(d);
  for (int j = 0; j < d; ++j) {
    double sd = std::sqrt(std::max(var[j], 0.0));
    scale[j] = sd < 1e-12 ? 1.0 : sd;
  }
  return NormalizationParams{std::move(center), std::move(scale)};
}

struct CostMatrix {
  Eigen::MatrixXd entries;  // size(a) x size(b)
  Metric metric = Metric::Euclidean;
};

inline Eigen::MatrixXd pairwise_cost(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb, Metric metric) {
  if (sa.cols() != sb.cols())
    throw ValidationError("cost matrix requires equal dimensions (" + std::to_string(sa.cols()) + " vs " +
                          std::to_string(sb.cols()) + ")");
  Eigen::MatrixXd d(sa.rows(), sb.rows());
  for (Eigen::Index i = 0; i < sa.rows(); ++i)
    for (Eigen::Index j = 0; j < sb.rows(); ++j) d(i, j) = (sa.row(i) - sb.row(j)).squaredNorm();
  if (metric == Metric::Euclidean) d = d.cwiseSqrt();
  return d;
}

inline CostMatrix cost_matrix(const EmpiricalDistribution& a, const EmpiricalDistribution& b, Metric metric) {
  return CostMatrix{pairwise_cost(a.support(), b.support(), metric), metric};
}

}  // namespace wcluster
