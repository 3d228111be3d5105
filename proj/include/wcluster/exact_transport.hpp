#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wcluster/common.hpp"
#include "wcluster/distribution.hpp"
#include "wcluster/sinkhorn.hpp"

namespace wcluster {

struct ExactTransportResult {
  double distance = 0;
  TransportPlan plan;
  int pivots = 0;
};

// Transportation simplex (u-v method) on the dense bipartite problem.
// Northwest-corner start, most-negative-reduced-cost pricing, Bland's rule
// fallback after a run of degenerate pivots. The basis is a spanning tree
// with exactly m+n-1 cells throughout.
inline ExactTransportResult exact_wasserstein(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                              const Eigen::MatrixXd& cost) {
  detail::check_sinkhorn_inputs(p, q, cost);
  const int m = static_cast<int>(p.size());
  const int n = static_cast<int>(q.size());
  const int basis_size = m + n - 1;
  const double max_cost = cost.maxCoeff();
  const double eps_reduced = 1e-11 * (1.0 + max_cost);

  std::vector<int> cell_i(basis_size), cell_j(basis_size);
  std::vector<double> flow(basis_size);

  {
    Eigen::VectorXd a = p, b = q;
    int i = 0, j = 0;
    for (int k = 0; k < basis_size; ++k) {
      cell_i[k] = i;
      cell_j[k] = j;
      double f = std::min(a[i], b[j]);
      flow[k] = f;
      a[i] -= f;
      b[j] -= f;
      if (k == basis_size - 1) break;
      if (i == m - 1) ++j;
      else if (j == n - 1) ++i;
      else if (a[i] <= b[j]) ++i;
      else ++j;
    }
  }

  // Node ids: rows 0..m-1, columns m..m+n-1.
  std::vector<std::vector<int>> adj(m + n);
  for (int k = 0; k < basis_size; ++k) {
    adj[cell_i[k]].push_back(k);
    adj[m + cell_j[k]].push_back(k);
  }
  auto drop_from = [&](std::vector<int>& list, int k) {
    for (std::size_t t = 0; t < list.size(); ++t)
      if (list[t] == k) {
        list[t] = list.back();
        list.pop_back();
        return;
      }
  };

  std::vector<double> u(m), v(n);
  std::vector<char> seen(m + n);
  std::vector<int> stack;
  auto compute_duals = [&]() {
    std::fill(seen.begin(), seen.end(), 0);
    stack.clear();
    stack.push_back(0);
    seen[0] = 1;
    u[0] = 0;
    while (!stack.empty()) {
      int node = stack.back();
      stack.pop_back();
      for (int k : adj[node]) {
        int other = (node < m) ? m + cell_j[k] : cell_i[k];
        if (seen[other]) continue;
        seen[other] = 1;
        if (other >= m) v[other - m] = cost(cell_i[k], cell_j[k]) - u[cell_i[k]];
        else u[other] = cost(cell_i[k], cell_j[k]) - v[cell_j[k]];
        stack.push_back(other);
      }
    }
  };

  std::vector<int> parent_node(m + n), parent_cell(m + n);
  auto tree_path = [&](int from, int to, std::vector<int>& path_cells) {
    std::fill(seen.begin(), seen.end(), 0);
    stack.clear();
    stack.push_back(from);
    seen[from] = 1;
    parent_node[from] = -1;
    while (!stack.empty()) {
      int node = stack.back();
      stack.pop_back();
      if (node == to) break;
      for (int k : adj[node]) {
        int other = (node < m) ? m + cell_j[k] : cell_i[k];
        if (seen[other]) continue;
        seen[other] = 1;
        parent_node[other] = node;
        parent_cell[other] = k;
        stack.push_back(other);
      }
    }
    path_cells.clear();
    for (int node = to; parent_node[node] != -1; node = parent_node[node]) path_cells.push_back(parent_cell[node]);
    // path_cells now runs from the `to` end back to `from`; reverse so index 0
    // touches `from`.
    std::reverse(path_cells.begin(), path_cells.end());
  };

  const int max_pivots = 100 * (m + n) + 10000;
  int pivots = 0;
  int consecutive_degenerate = 0;
  bool bland = false;
  std::vector<int> path_cells;
  while (true) {
    compute_duals();
    int best_i = -1, best_j = -1;
    double best_r = -eps_reduced;
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < m; ++i) {
        double r = cost(i, j) - u[i] - v[j];
        if (r < best_r) {
          best_r = r;
          best_i = i;
          best_j = j;
          if (bland) break;
        }
      }
      if (bland && best_i >= 0) break;
    }
    if (best_i < 0) break;
    if (++pivots > max_pivots)
      throw NumericalError("transportation simplex exceeded the pivot budget (" + std::to_string(max_pivots) + ")");

    tree_path(best_i, m + best_j, path_cells);
    double theta = std::numeric_limits<double>::infinity();
    int leaving_pos = -1;
    for (std::size_t t = 0; t < path_cells.size(); t += 2) {  // odd cycle positions carry -theta
      if (flow[path_cells[t]] < theta) {
        theta = flow[path_cells[t]];
        leaving_pos = static_cast<int>(t);
      }
    }
    if (leaving_pos < 0) throw NumericalError("transportation simplex lost its basis cycle");
    for (std::size_t t = 0; t < path_cells.size(); ++t) {
      if (t % 2 == 0) flow[path_cells[t]] -= theta;
      else flow[path_cells[t]] += theta;
    }
    int leaving = path_cells[static_cast<std::size_t>(leaving_pos)];
    drop_from(adj[cell_i[leaving]], leaving);
    drop_from(adj[m + cell_j[leaving]], leaving);
    cell_i[leaving] = best_i;
    cell_j[leaving] = best_j;
    flow[leaving] = theta;
    adj[best_i].push_back(leaving);
    adj[m + best_j].push_back(leaving);

    if (theta <= 0) {
      if (++consecutive_degenerate > m + n) bland = true;
    } else {
      consecutive_degenerate = 0;
      bland = false;
    }
  }

  ExactTransportResult res;
  res.pivots = pivots;
  res.plan.coupling = Eigen::MatrixXd::Zero(m, n);
  double total = 0;
  for (int k = 0; k < basis_size; ++k) {
    double f = flow[k] < 0 ? 0.0 : flow[k];
    res.plan.coupling(cell_i[k], cell_j[k]) += f;
    total += f * cost(cell_i[k], cell_j[k]);
  }
  res.distance = total;
  res.plan.row_marginal_error = (res.plan.coupling.rowwise().sum() - p).cwiseAbs().maxCoeff();
  res.plan.col_marginal_error = (res.plan.coupling.colwise().sum().transpose() - q).cwiseAbs().maxCoeff();
  if (res.plan.row_marginal_error > 1e-9 || res.plan.col_marginal_error > 1e-9)
    throw NumericalError("transportation simplex produced infeasible marginals");
  return res;
}

inline ExactTransportResult exact_wasserstein(const EmpiricalDistribution& a, const EmpiricalDistribution& b,
                                              const CostMatrix& cost) {
  if (static_cast<std::int64_t>(a.size()) * b.size() > 1000000)
    throw ValidationError("exact solver limited to 1e6 cost entries; use sinkhorn for larger problems");
  return exact_wasserstein(a.weights(), b.weights(), cost.entries);
}

inline ExactTransportResult exact_wasserstein(const EmpiricalDistribution& a, const EmpiricalDistribution& b,
                                              Metric metric) {
  return exact_wasserstein(a, b, cost_matrix(a, b, metric));
}

}  // namespace wcluster
