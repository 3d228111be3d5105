#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "wcluster/common.hpp"
#include "wcluster/distribution.hpp"
#include "wcluster/rng.hpp"
#include "wcluster/sinkhorn.hpp"

namespace wcluster {

struct BarycenterConfig {
  int support_size = 0;  // 0 picks the median member support size
  double lambda = 0.01;
  double theta = 1.0;  // support relaxation step in (0, 1]
  double t0 = 1.0;     // mirror-descent base step
  double outer_tolerance = 1e-5;
  int max_outer_iterations = 50;
  double weight_tolerance = 0.0;  // 0 falls back to outer_tolerance
  int max_weight_iterations = 100;
  Metric metric = Metric::SquaredEuclidean;
  std::uint64_t seed = 1;
  double sinkhorn_tolerance = 1e-9;
  int sinkhorn_max_iterations = 20000;

  void validate() const {
    if (support_size < 0) throw ValidationError("support_size must be >= 0");
    if (!(lambda > 0)) throw ValidationError("barycenter lambda must be > 0");
    if (!(theta > 0) || theta > 1) throw ValidationError("theta must lie in (0, 1]");
    if (!(t0 > 0)) throw ValidationError("t0 must be > 0");
    if (!(outer_tolerance > 0)) throw ValidationError("outer_tolerance must be > 0");
    if (max_outer_iterations < 1 || max_weight_iterations < 1)
      throw ValidationError("iteration limits must be >= 1");
  }

  SinkhornConfig sinkhorn_config() const {
    SinkhornConfig cfg;
    cfg.lambda = lambda;
    cfg.tolerance = sinkhorn_tolerance;
    cfg.max_iterations = sinkhorn_max_iterations;
    return cfg;
  }
};

struct Barycenter {
  EmpiricalDistribution distribution;
  double objective = 0;
  std::vector<double> objective_history;
  int iterations = 0;
  bool converged = false;
  Metric metric = Metric::SquaredEuclidean;
};

namespace detail {

inline double logsumexp(const Eigen::VectorXd& x) {
  double hi = x.maxCoeff();
  return hi + std::log((x.array() - hi).exp().sum());
}

}  // namespace detail

// Barycenter weights on a fixed support: accelerated mirror descent on the
// mean regularized transport cost. Each pass solves one transport problem per
// member; the gradient is the first-marginal dual potential. The multiplicative
// update runs in log space and is renormalized onto the simplex every pass.
inline Eigen::VectorXd fixed_support_weights(const std::vector<EmpiricalDistribution>& members,
                                             const Eigen::MatrixXd& support, const BarycenterConfig& cfg,
                                             double* objective_out = nullptr) {
  cfg.validate();
  if (members.empty()) throw ValidationError("barycenter needs at least one member");
  const int msize = static_cast<int>(support.rows());
  if (msize == 0) throw ValidationError("empty barycenter support");
  for (const auto& d : members)
    if (d.dim() != support.cols()) throw ValidationError("support dimension mismatch");

  std::vector<Eigen::MatrixXd> costs;
  costs.reserve(members.size());
  for (const auto& d : members) costs.push_back(pairwise_cost(support, d.support(), cfg.metric));

  SinkhornConfig sk = cfg.sinkhorn_config();
  const double weight_tol = cfg.weight_tolerance > 0 ? cfg.weight_tolerance : cfg.outer_tolerance;
  const double inv_members = 1.0 / static_cast<double>(members.size());

  Eigen::VectorXd p_hat = Eigen::VectorXd::Constant(msize, 1.0 / msize);
  Eigen::VectorXd log_p_tilde = Eigen::VectorXd::Constant(msize, -std::log(static_cast<double>(msize)));
  Eigen::VectorXd p = p_hat;
  std::vector<Eigen::VectorXd> warm_alpha(members.size());
  std::vector<Eigen::VectorXd> warm_beta(members.size());
  double objective = std::numeric_limits<double>::infinity();
  double previous = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= cfg.max_weight_iterations; ++t) {
    const double beta = (t + 1) / 2.0;
    Eigen::VectorXd p_tilde = log_p_tilde.array().exp();
    p = (1.0 - 1.0 / beta) * p_hat + (1.0 / beta) * p_tilde;

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(msize);
    objective = 0;
    for (std::size_t k = 0; k < members.size(); ++k) {
      SinkhornConfig sk_k = sk;
      if (warm_alpha[k].size() > 0) {
        sk_k.init_alpha = warm_alpha[k];
        sk_k.init_beta = warm_beta[k];
      }
      SinkhornResult res = sinkhorn(p, members[k].weights(), costs[k], sk_k);
      warm_alpha[k] = res.alpha;
      warm_beta[k] = res.beta;
      // alpha is reported as -lambda*log(u); the objective gradient in p is
      // +lambda*log(u), so accumulate the negated potential.
      grad -= res.alpha * inv_members;
      objective += res.distance * inv_members;
    }
    if (std::isfinite(previous) && detail::relative_change(objective, previous) < weight_tol) break;
    previous = objective;

    grad.array() -= grad.mean();  // the dual is defined up to a constant shift
    log_p_tilde -= cfg.t0 * beta * grad;
    log_p_tilde.array() -= detail::logsumexp(log_p_tilde);
    p_hat = (1.0 - 1.0 / beta) * p_hat + (1.0 / beta) * log_p_tilde.array().exp().matrix();
  }
  if (objective_out) *objective_out = objective;
  return p;
}

// Free-support barycenter: alternates the weight solve above with the
// fixed-point support update S <- (1-theta) S + theta diag(p)^-1 mean_k(plan_k
// S_k). The update is the exact block minimizer under the squared metric.
// Support rows whose weight collapses are respawned at the pooled weighted
// mean of the member supports.
inline Barycenter free_support_barycenter(const std::vector<EmpiricalDistribution>& members, BarycenterConfig cfg) {
  cfg.validate();
  if (members.empty()) throw ValidationError("barycenter needs at least one member");
  const int dim = members[0].dim();
  for (const auto& d : members)
    if (d.dim() != dim) throw ValidationError("members must share a dimension");

  int msize = cfg.support_size;
  if (msize == 0) {
    std::vector<int> sizes;
    sizes.reserve(members.size());
    for (const auto& d : members) sizes.push_back(d.size());
    std::sort(sizes.begin(), sizes.end());
    msize = sizes[(sizes.size() - 1) / 2];
  }

  Eigen::Index pooled_rows = 0;
  for (const auto& d : members) pooled_rows += d.size();
  Eigen::MatrixXd pooled(pooled_rows, dim);
  Eigen::VectorXd pooled_w(pooled_rows);
  {
    Eigen::Index at = 0;
    const double inv_members = 1.0 / static_cast<double>(members.size());
    for (const auto& d : members) {
      pooled.middleRows(at, d.size()) = d.support();
      pooled_w.segment(at, d.size()) = d.weights() * inv_members;
      at += d.size();
    }
    // Sorting the pool makes the seeded support draw independent of member
    // order.
    std::vector<Eigen::Index> by_row(static_cast<std::size_t>(pooled_rows));
    std::iota(by_row.begin(), by_row.end(), 0);
    std::sort(by_row.begin(), by_row.end(), [&](Eigen::Index a, Eigen::Index b) {
      for (int j = 0; j < dim; ++j) {
        if (pooled(a, j) != pooled(b, j)) return pooled(a, j) < pooled(b, j);
      }
      return pooled_w[a] < pooled_w[b];
    });
    Eigen::MatrixXd sorted(pooled_rows, dim);
    Eigen::VectorXd sorted_w(pooled_rows);
    for (Eigen::Index i = 0; i < pooled_rows; ++i) {
      sorted.row(i) = pooled.row(by_row[static_cast<std::size_t>(i)]);
      sorted_w[i] = pooled_w[by_row[static_cast<std::size_t>(i)]];
    }
    pooled = std::move(sorted);
    pooled_w = std::move(sorted_w);
  }
  Eigen::VectorXd pooled_mean = pooled.transpose() * pooled_w;

  Eigen::MatrixXd support(msize, dim);
  {
    SubstreamRng rng({cfg.seed, 0x62617279ULL});
    if (msize <= pooled_rows) {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(pooled_rows));
      std::iota(idx.begin(), idx.end(), 0);
      for (int l = 0; l < msize; ++l) {
        std::size_t pick = l + static_cast<std::size_t>(rng.next_u64() % (idx.size() - l));
        std::swap(idx[l], idx[pick]);
        support.row(l) = pooled.row(idx[l]);
      }
    } else {
      for (int l = 0; l < msize; ++l)
        support.row(l) = pooled.row(static_cast<Eigen::Index>(rng.next_u64() % pooled_rows));
    }
  }

  SinkhornConfig sk = cfg.sinkhorn_config();
  Eigen::VectorXd p = Eigen::VectorXd::Constant(msize, 1.0 / msize);
  Barycenter result{EmpiricalDistribution::from_points(support, p), 0, {}, 0, false, cfg.metric};
  const double inv_members = 1.0 / static_cast<double>(members.size());
  for (int it = 1; it <= cfg.max_outer_iterations; ++it) {
    double objective = 0;
    Eigen::VectorXd p_new = fixed_support_weights(members, support, cfg, &objective);

    Eigen::MatrixXd transported = Eigen::MatrixXd::Zero(msize, dim);
    for (const auto& d : members) {
      Eigen::MatrixXd cost = pairwise_cost(support, d.support(), cfg.metric);
      SinkhornResult res = sinkhorn(p_new, d.weights(), cost, sk);
      transported += (res.plan.coupling * d.support()) * inv_members;
    }

    Eigen::MatrixXd support_new(msize, dim);
    bool respawned = false;
    for (int l = 0; l < msize; ++l) {
      if (p_new[l] < 1e-12) {
        support_new.row(l) = pooled_mean.transpose();
        p_new[l] = 1e-12;
        respawned = true;
      } else {
        support_new.row(l) =
            (1.0 - cfg.theta) * support.row(l) + cfg.theta * (transported.row(l) / p_new[l]);
      }
    }
    if (respawned) p_new /= p_new.sum();

    double support_move = (support_new - support).cwiseAbs().maxCoeff();
    double weight_move = (p_new - p).cwiseAbs().maxCoeff();
    support = std::move(support_new);
    p = std::move(p_new);
    result.objective_history.push_back(objective);
    result.iterations = it;
    if (support_move < cfg.outer_tolerance && weight_move < cfg.outer_tolerance) {
      result.converged = true;
      break;
    }
  }

  double final_objective = 0;
  {
    EmpiricalDistribution bary = EmpiricalDistribution::from_points(support, p);
    for (const auto& d : members)
      final_objective += sinkhorn(bary, d, cfg.metric, sk).distance * inv_members;
    result.distribution = std::move(bary);
  }
  result.objective = final_objective;
  result.objective_history.push_back(final_objective);
  return result;
}

}  // namespace wcluster
