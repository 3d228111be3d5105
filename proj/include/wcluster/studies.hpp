#pragma once

#include <boost/math/distributions/fisher_f.hpp>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "wcluster/callcenter.hpp"
#include "wcluster/clustering.hpp"
#include "wcluster/common.hpp"
#include "wcluster/distribution.hpp"
#include "wcluster/rng.hpp"
#include "wcluster/sinkhorn.hpp"
#include "wcluster/thread_pool.hpp"

namespace wcluster {

namespace detail {

inline double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) throw ValidationError("variance needs at least two samples");
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= xs.size();
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / (xs.size() - 1);
}

inline double sample_mean(const std::vector<double>& xs) {
  double mean = 0;
  for (double x : xs) mean += x;
  return xs.empty() ? 0.0 : mean / xs.size();
}

}  // namespace detail

// Two-sided p-value for H0: equal variances, from F = var_a / var_b with
// (dof, dof) degrees of freedom.
inline double two_sided_f_test(double f, int dof1, int dof2) {
  if (dof1 < 1 || dof2 < 1) throw ValidationError("F test requires positive degrees of freedom");
  if (!std::isfinite(f)) return 0.0;
  if (!(f > 0)) return 0.0;
  boost::math::fisher_f_distribution<double> dist(dof1, dof2);
  double lower = boost::math::cdf(dist, f);
  double p = 2.0 * std::min(lower, 1.0 - lower);
  return std::min(p, 1.0);
}

struct CrnStudyReport {
  std::vector<double> distances_crn;
  std::vector<double> distances_independent;
  double variance_crn = 0;
  double variance_independent = 0;
  double f_statistic = 0;  // variance_independent / variance_crn
  double p_value = 1;
};

// Repeats "simulate the pair, measure their Sinkhorn distance" under both
// sampling modes. Each macroreplication draws its own seed; CRN pairing holds
// within a macroreplication.
inline CrnStudyReport crn_distance_study(const CallCenterConfig& cfg, const Staffing& a, const Staffing& b,
                                         int n_replications, int n_macroreps, const SinkhornConfig& sk,
                                         std::uint64_t seed, Metric metric = Metric::Euclidean, int n_threads = 1) {
  if (n_macroreps < 2) throw ValidationError("n_macroreps must be >= 2");
  CrnStudyReport report;
  report.distances_crn.resize(n_macroreps);
  report.distances_independent.resize(n_macroreps);
  const std::vector<Staffing> pair = {a, b};
  parallel_for(static_cast<std::size_t>(n_macroreps) * 2, n_threads, [&](std::size_t task) {
    const int m = static_cast<int>(task / 2);
    const RngMode mode = (task % 2 == 0) ? RngMode::Crn : RngMode::Independent;
    const std::uint64_t seed_m = hash_words({seed, 0x6d616372ULL, static_cast<std::uint64_t>(m)});
    ScenarioRun run = run_scenarios(cfg, pair, n_replications, mode, seed_m, 1);
    NormalizationParams norm = fit_normalization(run.distributions);
    double d = sinkhorn(norm.apply(run.distributions[0]), norm.apply(run.distributions[1]), metric, sk).distance;
    (mode == RngMode::Crn ? report.distances_crn : report.distances_independent)[m] = d;
  });
  report.variance_crn = detail::sample_variance(report.distances_crn);
  report.variance_independent = detail::sample_variance(report.distances_independent);
  report.f_statistic = report.variance_crn > 0 ? report.variance_independent / report.variance_crn
                                               : std::numeric_limits<double>::infinity();
  if (report.variance_independent == 0 && report.variance_crn == 0) {
    report.f_statistic = 1.0;
    report.p_value = 1.0;
  } else {
    report.p_value = two_sided_f_test(report.f_statistic, n_macroreps - 1, n_macroreps - 1);
  }
  return report;
}

struct AriStudyReport {
  std::vector<int> truth_labels;
  int truth_k = 0;
  std::vector<double> ari_crn;
  std::vector<double> ari_independent;
  double mean_crn = 0, mean_independent = 0;
  double sd_crn = 0, sd_independent = 0;
};

// Clustering stability study: a high-replication run fixes the proxy ground
// truth; each macroreplication reclusters a low-replication run under both
// modes and scores it with ARI against the truth.
inline AriStudyReport ari_study(const CallCenterConfig& cfg, const std::vector<Staffing>& staffings, int n_truth,
                                int n_small, int n_macroreps, const SinkhornConfig& sk, std::uint64_t seed,
                                Metric metric = Metric::Euclidean, int n_threads = 1) {
  if (staffings.size() < 3) throw ValidationError("ari study needs at least three scenarios");
  if (n_macroreps < 2) throw ValidationError("n_macroreps must be >= 2");

  auto cluster_labels = [&](const std::vector<EmpiricalDistribution>& dists, int threads, int* k_out) {
    DistanceMatrix dm = pairwise_distances(dists, sk, metric, true, threads);
    Clustering c = select_clustering(agglomerate(dm), dm);
    if (k_out) *k_out = c.k;
    return c.labels;
  };

  AriStudyReport report;
  {
    ScenarioRun truth = run_scenarios(cfg, staffings, n_truth, RngMode::Independent,
                                      hash_words({seed, 0x74727574ULL}), n_threads);
    report.truth_labels = cluster_labels(truth.distributions, n_threads, &report.truth_k);
  }

  report.ari_crn.resize(n_macroreps);
  report.ari_independent.resize(n_macroreps);
  parallel_for(static_cast<std::size_t>(n_macroreps) * 2, n_threads, [&](std::size_t task) {
    const int m = static_cast<int>(task / 2);
    const RngMode mode = (task % 2 == 0) ? RngMode::Crn : RngMode::Independent;
    const std::uint64_t seed_m = hash_words({seed, 0x61726973ULL, static_cast<std::uint64_t>(m)});
    ScenarioRun run = run_scenarios(cfg, staffings, n_small, mode, seed_m, 1);
    std::vector<int> labels = cluster_labels(run.distributions, 1, nullptr);
    double ari = adjusted_rand_index(labels, report.truth_labels);
    (mode == RngMode::Crn ? report.ari_crn : report.ari_independent)[m] = ari;
  });
  report.mean_crn = detail::sample_mean(report.ari_crn);
  report.mean_independent = detail::sample_mean(report.ari_independent);
  report.sd_crn = std::sqrt(detail::sample_variance(report.ari_crn));
  report.sd_independent = std::sqrt(detail::sample_variance(report.ari_independent));
  return report;
}

}  // namespace wcluster
