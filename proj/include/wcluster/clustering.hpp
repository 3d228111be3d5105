#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "wcluster/common.hpp"
#include "wcluster/distribution.hpp"
#include "wcluster/sinkhorn.hpp"
#include "wcluster/thread_pool.hpp"

namespace wcluster {

struct DistanceMatrix {
  Eigen::MatrixXd entries;
  std::vector<std::string> ids;

  int size() const { return static_cast<int>(entries.rows()); }

  void validate() const {
    if (entries.rows() != entries.cols()) throw ValidationError("distance matrix must be square");
    if (!ids.empty() && static_cast<int>(ids.size()) != size())
      throw ValidationError("distance matrix id count mismatch");
    if (!entries.allFinite()) throw ValidationError("non-finite distance");
    for (int i = 0; i < size(); ++i) {
      if (entries(i, i) != 0.0) throw ValidationError("distance matrix diagonal must be exactly 0");
      for (int j = i + 1; j < size(); ++j) {
        if (entries(i, j) < 0 || entries(j, i) < 0) throw ValidationError("negative distance");
        if (std::abs(entries(i, j) - entries(j, i)) > 1e-9)
          throw ValidationError("distance matrix must be symmetric within 1e-9");
      }
    }
  }
};

// All pairwise regularized distances. By default the inputs are first pooled
// z-scored so no KPI coordinate dominates the cost. Pairs are solved
// independently (safe to spread over threads); failures are rethrown tagged
// with the offending pair.
inline DistanceMatrix pairwise_distances(const std::vector<EmpiricalDistribution>& dists, const SinkhornConfig& cfg,
                                         Metric metric = Metric::Euclidean, bool normalize = true, int n_threads = 1,
                                         const std::vector<std::string>* ids = nullptr) {
  const int n = static_cast<int>(dists.size());
  if (n < 2) throw ValidationError("need at least two distributions");
  if (ids && static_cast<int>(ids->size()) != n) throw ValidationError("id count mismatch");
  std::vector<EmpiricalDistribution> prepared;
  prepared.reserve(dists.size());
  if (normalize) {
    NormalizationParams params = fit_normalization(dists);
    for (const auto& d : dists) prepared.push_back(params.apply(d));
  } else {
    const int dim = dists[0].dim();
    for (const auto& d : dists) {
      if (d.dim() != dim) throw ValidationError("distributions must share a dimension");
      prepared.push_back(d);
    }
  }
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<double> values(pairs.size());
  parallel_for(pairs.size(), n_threads, [&](std::size_t t) {
    auto [i, j] = pairs[t];
    try {
      values[t] = sinkhorn(prepared[i], prepared[j], metric, cfg).distance;
    } catch (const NumericalError& e) {
      std::string a = ids ? (*ids)[i] : std::to_string(i);
      std::string b = ids ? (*ids)[j] : std::to_string(j);
      throw NumericalError("pair (" + a + ", " + b + "): " + e.what());
    }
  });
  DistanceMatrix dm;
  dm.entries = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t t = 0; t < pairs.size(); ++t) {
    auto [i, j] = pairs[t];
    dm.entries(i, j) = values[t];
    dm.entries(j, i) = values[t];
  }
  if (ids) dm.ids = *ids;
  else {
    dm.ids.reserve(n);
    for (int i = 0; i < n; ++i) dm.ids.push_back(std::to_string(i));
  }
  return dm;
}

struct Merge {
  int left = 0;
  int right = 0;
  double height = 0;
  int new_id = 0;
};

struct Dendrogram {
  std::vector<std::string> leaf_ids;
  std::vector<Merge> merges;

  int leaves() const { return static_cast<int>(leaf_ids.size()); }
};

// Complete-linkage agglomeration via the max form of the Lance-Williams
// recurrence. Cluster ids follow the usual convention: leaves are 0..N-1 and
// the merge at step s creates id N+s. Ties pick the lexicographically
// smallest (id_low, id_high) pair.
inline Dendrogram agglomerate(const DistanceMatrix& dm) {
  dm.validate();
  const int n = dm.size();
  if (n < 2) throw ValidationError("agglomeration needs at least two points");
  // Tolerated sub-1e-9 asymmetry is averaged away; exact for symmetric input.
  Eigen::MatrixXd work = 0.5 * (dm.entries + dm.entries.transpose());
  std::vector<int> id(n);
  std::vector<char> active(n, 1);
  for (int i = 0; i < n; ++i) id[i] = i;

  Dendrogram out;
  out.leaf_ids = dm.ids;
  out.merges.reserve(n - 1);
  for (int step = 0; step < n - 1; ++step) {
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        double dij = work(i, j);
        if (dij < best) {
          best = dij;
          bi = i;
          bj = j;
        } else if (dij == best) {
          int lo = std::min(id[i], id[j]), hi = std::max(id[i], id[j]);
          int blo = std::min(id[bi], id[bj]), bhi = std::max(id[bi], id[bj]);
          if (lo < blo || (lo == blo && hi < bhi)) {
            bi = i;
            bj = j;
          }
        }
      }
    }
    Merge m;
    m.left = std::min(id[bi], id[bj]);
    m.right = std::max(id[bi], id[bj]);
    m.height = best;
    m.new_id = n + step;
    out.merges.push_back(m);
    for (int t = 0; t < n; ++t) {
      if (!active[t] || t == bi || t == bj) continue;
      double d = std::max(work(bi, t), work(bj, t));
      work(bi, t) = d;
      work(t, bi) = d;
    }
    active[bj] = 0;
    id[bi] = n + step;
  }
  return out;
}

// Labels for the k-cluster level: apply the first N-k merges, then number the
// groups 0..k-1 by their smallest leaf index.
inline std::vector<int> cut_dendrogram(const Dendrogram& dendro, int k) {
  const int n = dendro.leaves();
  if (k < 1 || k > n) throw ValidationError("cut level must satisfy 1 <= k <= N");
  std::vector<int> parent(2 * n - 1);
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (int s = 0; s < n - k; ++s) {
    const Merge& m = dendro.merges[s];
    parent[find(m.left)] = m.new_id;
    parent[find(m.right)] = m.new_id;
  }
  std::vector<int> labels(n, -1);
  std::vector<int> relabel(2 * n - 1, -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    int root = find(i);
    if (relabel[root] < 0) relabel[root] = next++;
    labels[i] = relabel[root];
  }
  return labels;
}

struct SilhouetteOptions {
  // The between-cluster term divides by |C'| by default; the switch divides by
  // |C'|-1 instead (clamped at 1) to match an alternate convention.
  bool legacy_between_denominator = false;
};

// Two-level silhouette: the silhouette of each point is averaged within its
// cluster, then the per-cluster averages are averaged. Singletons score 0.
inline double silhouette_index(const DistanceMatrix& dm, const std::vector<int>& labels,
                               SilhouetteOptions opts = {}) {
  const int n = dm.size();
  if (static_cast<int>(labels.size()) != n) throw ValidationError("label count mismatch");
  int k = 0;
  for (int l : labels) {
    if (l < 0) throw ValidationError("labels must be non-negative");
    k = std::max(k, l + 1);
  }
  std::vector<int> count(k, 0);
  for (int l : labels) ++count[l];
  for (int c = 0; c < k; ++c)
    if (count[c] == 0) throw ValidationError("labels must be contiguous 0..k-1");
  if (k < 2 || k > n - 1) throw ValidationError("silhouette undefined for k < 2 or k > N-1");

  std::vector<double> cluster_sum(k, 0);
  Eigen::MatrixXd to_cluster = Eigen::MatrixXd::Zero(n, k);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) to_cluster(i, labels[j]) += dm.entries(i, j);
  for (int i = 0; i < n; ++i) {
    const int c = labels[i];
    double s = 0;
    if (count[c] > 1) {
      double a = to_cluster(i, c) / (count[c] - 1);
      double b = std::numeric_limits<double>::infinity();
      for (int c2 = 0; c2 < k; ++c2) {
        if (c2 == c) continue;
        double denom = opts.legacy_between_denominator ? std::max(count[c2] - 1, 1) : count[c2];
        b = std::min(b, to_cluster(i, c2) / denom);
      }
      double denom = std::max(a, b);
      s = denom > 0 ? (b - a) / denom : 0.0;
    }
    cluster_sum[c] += s;
  }
  double total = 0;
  for (int c = 0; c < k; ++c) total += cluster_sum[c] / count[c];
  return total / k;
}

struct Clustering {
  std::vector<int> labels;
  int k = 0;
  double silhouette = 0;
};

// Silhouette of every candidate level k = 2..N-1.
inline std::vector<std::pair<int, double>> silhouette_by_level(const Dendrogram& dendro, const DistanceMatrix& dm,
                                                               SilhouetteOptions opts = {}) {
  const int n = dendro.leaves();
  if (n < 3) throw ValidationError("level selection needs at least three points");
  std::vector<std::pair<int, double>> table;
  table.reserve(n - 2);
  for (int k = 2; k <= n - 1; ++k) table.emplace_back(k, silhouette_index(dm, cut_dendrogram(dendro, k), opts));
  return table;
}

// Best level by silhouette; ties resolve to the smaller k.
inline Clustering select_clustering(const Dendrogram& dendro, const DistanceMatrix& dm, SilhouetteOptions opts = {}) {
  auto table = silhouette_by_level(dendro, dm, opts);
  int best_k = table.front().first;
  double best = table.front().second;
  for (const auto& [k, s] : table) {
    if (s > best) {
      best = s;
      best_k = k;
    }
  }
  Clustering c;
  c.k = best_k;
  c.silhouette = best;
  c.labels = cut_dendrogram(dendro, best_k);
  return c;
}

// Hubert-Arabie adjusted Rand index, computed from the contingency table in
// 128-bit integers so the value is an exact ratio before the final division.
inline double adjusted_rand_index(const std::vector<int>& x, const std::vector<int>& y) {
  if (x.size() != y.size()) throw ValidationError("partitions must label the same items");
  if (x.empty()) throw ValidationError("empty partitions");
  int kx = 0, ky = 0;
  for (int l : x) {
    if (l < 0) throw ValidationError("labels must be non-negative");
    kx = std::max(kx, l + 1);
  }
  for (int l : y) {
    if (l < 0) throw ValidationError("labels must be non-negative");
    ky = std::max(ky, l + 1);
  }
  std::vector<std::int64_t> table(static_cast<std::size_t>(kx) * ky, 0);
  std::vector<std::int64_t> rows(kx, 0), cols(ky, 0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    ++table[static_cast<std::size_t>(x[t]) * ky + y[t]];
    ++rows[x[t]];
    ++cols[y[t]];
  }
  auto choose2 = [](std::int64_t v) -> __int128 { return static_cast<__int128>(v) * (v - 1) / 2; };
  __int128 sum_cells = 0, sum_rows = 0, sum_cols = 0;
  for (auto v : table) sum_cells += choose2(v);
  for (auto v : rows) sum_rows += choose2(v);
  for (auto v : cols) sum_cols += choose2(v);
  __int128 pairs = choose2(static_cast<std::int64_t>(x.size()));
  // Both sides doubled so the (A+B)/2 marginal term stays integral.
  __int128 num = 2 * (pairs * sum_cells - sum_rows * sum_cols);
  __int128 den = pairs * (sum_rows + sum_cols) - 2 * sum_rows * sum_cols;
  if (den == 0) return 1.0;  // both partitions trivially agree (all-singletons or one block)
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace wcluster
