#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wcluster/common.hpp"
#include "wcluster/distribution.hpp"

namespace wcluster {

struct SinkhornConfig {
  double lambda = 0.01;
  double tolerance = 1e-7;  // relative change of the transport cost per sweep
  int max_iterations = 10000;

  enum class Domain { Auto, Scaling, Log };
  Domain domain = Domain::Auto;

  // Optional warm-start potentials in cost units (lambda independent), as
  // returned in SinkhornResult::alpha / beta.
  std::optional<Eigen::VectorXd> init_alpha;
  std::optional<Eigen::VectorXd> init_beta;

  void validate() const {
    if (!(lambda > 0)) throw ValidationError("sinkhorn lambda must be > 0");
    if (!(tolerance > 0)) throw ValidationError("sinkhorn tolerance must be > 0");
    if (max_iterations < 1) throw ValidationError("sinkhorn max_iterations must be >= 1");
  }
};

struct TransportPlan {
  Eigen::MatrixXd coupling;
  double row_marginal_error = 0;
  double col_marginal_error = 0;
};

struct SinkhornResult {
  double distance = 0;  // <D, plan>, the transported-cost value of the plan
  TransportPlan plan;
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd alpha;  // dual potential of the first marginal, cost units
  Eigen::VectorXd beta;   // dual potential of the second marginal
};

// Entropy of a coupling, with 0 log 0 = 0.
inline double plan_entropy(const TransportPlan& plan) {
  double h = 0;
  const auto& g = plan.coupling;
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      if (g(i, j) > 0) h -= g(i, j) * std::log(g(i, j));
  return h;
}

namespace detail {

inline void check_sinkhorn_inputs(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::MatrixXd& cost) {
  if (cost.rows() != p.size() || cost.cols() != q.size())
    throw ValidationError("cost matrix shape does not match the marginals");
  if (p.size() == 0 || q.size() == 0) throw ValidationError("empty marginal");
  if (!cost.allFinite() || (cost.array() < 0).any()) throw ValidationError("cost entries must be finite and >= 0");
}

inline double relative_change(double value, double previous) {
  return std::abs(value - previous) / std::max(std::abs(previous), 1e-300);
}

// The transported cost can stall (even at exactly 0) while the iterate is
// still far from feasible, so convergence also requires the free marginal to
// be met within this bound.
inline constexpr double kMarginalFeasibilityTol = 1e-6;

[[noreturn]] inline void throw_underflow(double lambda, double max_cost) {
  throw NumericalError("sinkhorn scaling underflow: lambda/max_cost = " +
                       format_double(lambda / std::max(max_cost, 1e-300)) +
                       "; use the log domain or a larger lambda");
}

inline SinkhornResult sinkhorn_scaling(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                       const Eigen::MatrixXd& cost, const SinkhornConfig& cfg) {
  const double lambda = cfg.lambda;
  const double max_cost = cost.size() > 0 ? cost.maxCoeff() : 0.0;
  Eigen::MatrixXd kernel = (-cost / lambda).array().exp();
  Eigen::MatrixXd kernel_cost = kernel.cwiseProduct(cost);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(q.size());
  if (cfg.init_beta) v = (-(*cfg.init_beta) / lambda).array().exp();
  if (!v.allFinite()) throw_underflow(lambda, max_cost);
  Eigen::VectorXd u(p.size());
  double distance = std::numeric_limits<double>::infinity();
  double previous = std::numeric_limits<double>::infinity();
  int sweeps = 0;
  bool converged = false;
  while (sweeps < cfg.max_iterations) {
    ++sweeps;
    Eigen::VectorXd kv = kernel * v;
    if (!(kv.array() > 0).all() || !kv.allFinite()) throw_underflow(lambda, max_cost);
    u = p.cwiseQuotient(kv);
    distance = u.dot(kernel_cost * v);
    if (!std::isfinite(distance)) throw_underflow(lambda, max_cost);
    Eigen::VectorXd ktu = kernel.transpose() * u;
    if (!(ktu.array() > 0).all() || !ktu.allFinite()) throw_underflow(lambda, max_cost);
    double col_gap = (v.cwiseProduct(ktu) - q).cwiseAbs().maxCoeff();
    if (std::isfinite(previous) && detail::relative_change(distance, previous) < cfg.tolerance &&
        col_gap <= kMarginalFeasibilityTol) {
      converged = true;
      break;
    }
    previous = distance;
    v = q.cwiseQuotient(ktu);
  }
  if (!converged) {
    Eigen::VectorXd kv = kernel * v;
    if (!(kv.array() > 0).all() || !kv.allFinite()) throw_underflow(lambda, max_cost);
    u = p.cwiseQuotient(kv);
    distance = u.dot(kernel_cost * v);
  }
  SinkhornResult res;
  res.distance = distance;
  res.iterations = sweeps;
  res.converged = converged;
  res.plan.coupling = u.asDiagonal() * kernel * v.asDiagonal();
  res.plan.row_marginal_error = (res.plan.coupling.rowwise().sum() - p).cwiseAbs().maxCoeff();
  res.plan.col_marginal_error = (res.plan.coupling.colwise().sum().transpose() - q).cwiseAbs().maxCoeff();
  res.alpha = -lambda * u.array().log();
  res.beta = -lambda * v.array().log();
  if (!res.alpha.allFinite() || !res.beta.allFinite()) throw_underflow(lambda, max_cost);
  return res;
}

inline SinkhornResult sinkhorn_log(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::MatrixXd& cost,
                                   const SinkhornConfig& cfg) {
  const double lambda = cfg.lambda;
  const Eigen::Index m = p.size(), n = q.size();
  Eigen::MatrixXd log_kernel = -cost / lambda;
  Eigen::VectorXd log_p = p.array().log();
  Eigen::VectorXd log_q = q.array().log();
  Eigen::VectorXd lu = cfg.init_alpha ? (-(*cfg.init_alpha) / lambda).eval() : Eigen::VectorXd::Zero(m);
  Eigen::VectorXd lv = cfg.init_beta ? (-(*cfg.init_beta) / lambda).eval() : Eigen::VectorXd::Zero(n);

  auto lse_rows = [&](Eigen::VectorXd& out) {
    // out_i = log sum_j exp(log_kernel(i,j) + lv_j)
    for (Eigen::Index i = 0; i < m; ++i) {
      double hi = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) hi = std::max(hi, log_kernel(i, j) + lv[j]);
      double s = 0;
      for (Eigen::Index j = 0; j < n; ++j) s += std::exp(log_kernel(i, j) + lv[j] - hi);
      out[i] = hi + std::log(s);
    }
  };
  auto lse_cols = [&](Eigen::VectorXd& out) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double hi = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < m; ++i) hi = std::max(hi, log_kernel(i, j) + lu[i]);
      double s = 0;
      for (Eigen::Index i = 0; i < m; ++i) s += std::exp(log_kernel(i, j) + lu[i] - hi);
      out[j] = hi + std::log(s);
    }
  };
  auto plan_cost = [&]() {
    double total = 0;
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < n; ++j) total += cost(i, j) * std::exp(lu[i] + log_kernel(i, j) + lv[j]);
    return total;
  };

  double distance = std::numeric_limits<double>::infinity();
  double previous = std::numeric_limits<double>::infinity();
  int sweeps = 0;
  bool converged = false;
  Eigen::VectorXd row_lse(m), col_lse(n);
  while (sweeps < cfg.max_iterations) {
    ++sweeps;
    lse_rows(row_lse);
    lu = log_p - row_lse;
    if (!lu.allFinite()) throw NumericalError("sinkhorn log-domain update produced non-finite potential");
    distance = plan_cost();
    if (!std::isfinite(distance)) throw NumericalError("sinkhorn log-domain cost is non-finite");
    lse_cols(col_lse);
    double col_gap = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      col_gap = std::max(col_gap, std::abs(std::exp(lv[j] + col_lse[j]) - q[j]));
    if (std::isfinite(previous) && detail::relative_change(distance, previous) < cfg.tolerance &&
        col_gap <= detail::kMarginalFeasibilityTol) {
      converged = true;
      break;
    }
    previous = distance;
    lv = log_q - col_lse;
    if (!lv.allFinite()) throw NumericalError("sinkhorn log-domain update produced non-finite potential");
  }
  if (!converged) {
    lse_rows(row_lse);
    lu = log_p - row_lse;
    distance = plan_cost();
  }
  SinkhornResult res;
  res.distance = distance;
  res.iterations = sweeps;
  res.converged = converged;
  res.plan.coupling.resize(m, n);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) res.plan.coupling(i, j) = std::exp(lu[i] + log_kernel(i, j) + lv[j]);
  res.plan.row_marginal_error = (res.plan.coupling.rowwise().sum() - p).cwiseAbs().maxCoeff();
  res.plan.col_marginal_error = (res.plan.coupling.colwise().sum().transpose() - q).cwiseAbs().maxCoeff();
  res.alpha = -lambda * lu;
  res.beta = -lambda * lv;
  return res;
}

}  // namespace detail

// Entropy-regularized transport between weighted atom sets. Reports the
// transported cost <D, plan> of the regularized plan, not the entropic
// objective. Sweeps stop when the relative change of that cost drops below
// cfg.tolerance and the plan marginals are met within 1e-6.
inline SinkhornResult sinkhorn(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::MatrixXd& cost,
                               const SinkhornConfig& cfg) {
  cfg.validate();
  detail::check_sinkhorn_inputs(p, q, cost);
  bool use_log;
  switch (cfg.domain) {
    case SinkhornConfig::Domain::Scaling: use_log = false; break;
    case SinkhornConfig::Domain::Log: use_log = true; break;
    default: {
      double max_cost = cost.maxCoeff();
      use_log = max_cost > 0 && cfg.lambda / max_cost < 0.05;
    }
  }
  return use_log ? detail::sinkhorn_log(p, q, cost, cfg) : detail::sinkhorn_scaling(p, q, cost, cfg);
}

inline SinkhornResult sinkhorn(const EmpiricalDistribution& a, const EmpiricalDistribution& b, const CostMatrix& cost,
                               const SinkhornConfig& cfg) {
  return sinkhorn(a.weights(), b.weights(), cost.entries, cfg);
}

inline SinkhornResult sinkhorn(const EmpiricalDistribution& a, const EmpiricalDistribution& b, Metric metric,
                               const SinkhornConfig& cfg) {
  return sinkhorn(a, b, cost_matrix(a, b, metric), cfg);
}

// Geometric lambda continuation: solves at lambda_start, then repeatedly
// multiplies lambda by `factor` (< 1) warm-starting from the previous
// potentials, until lambda_end is reached. Records (lambda, distance) pairs.
inline SinkhornResult sinkhorn_scheduled(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                         const Eigen::MatrixXd& cost, double lambda_start, double lambda_end,
                                         double factor, const SinkhornConfig& base,
                                         std::vector<std::pair<double, double>>* path = nullptr) {
  if (!(lambda_start > 0) || !(lambda_end > 0) || lambda_end > lambda_start)
    throw ValidationError("schedule requires 0 < lambda_end <= lambda_start");
  if (!(factor > 0) || !(factor < 1)) throw ValidationError("schedule factor must lie in (0, 1)");
  SinkhornConfig cfg = base;
  cfg.lambda = lambda_start;
  SinkhornResult res = sinkhorn(p, q, cost, cfg);
  if (path) path->emplace_back(cfg.lambda, res.distance);
  while (cfg.lambda > lambda_end) {
    cfg.lambda = std::max(cfg.lambda * factor, lambda_end);
    cfg.init_alpha = res.alpha;
    cfg.init_beta = res.beta;
    res = sinkhorn(p, q, cost, cfg);
    if (path) path->emplace_back(cfg.lambda, res.distance);
  }
  return res;
}

}  // namespace wcluster
