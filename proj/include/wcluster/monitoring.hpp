#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wcluster/callcenter.hpp"
#include "wcluster/common.hpp"
#include "wcluster/distribution.hpp"
#include "wcluster/thread_pool.hpp"

namespace wcluster {

struct StateRecord {
  StateVector state;
  std::array<double, 3> kpis{};  // mean utilization, summed class-max technical waits, churn
};

inline const std::array<const char*, 3>& state_kpi_names() {
  static const std::array<const char*, 3> names = {"utilization", "max_wait_sum", "churn"};
  return names;
}

// Hourly (state, following-hour KPI) records over n_days simulated days.
// Utilization spreads all operator busy minutes over the whole staff; waits
// are attributed to the hour a technical service starts; churn counts
// abandonment epochs inside the hour.
inline std::vector<StateRecord> collect_states(const CallCenterConfig& cfg, const Staffing& staffing, int n_days,
                                               std::uint64_t seed, int n_threads = 1) {
  cfg.validate();
  staffing.validate_for_simulation();
  if (n_days < 1) throw ValidationError("n_days must be >= 1");
  const int hours = 8;
  std::vector<StateRecord> records(static_cast<std::size_t>(n_days) * hours);
  const double ops_minutes = 60.0 * staffing.total();
  parallel_for(static_cast<std::size_t>(n_days), n_threads, [&](std::size_t d) {
    RngPolicy policy{RngMode::Crn, seed, static_cast<std::uint64_t>(d), 0};
    DayResult day = simulate_day_detailed(cfg, staffing, generate_population(cfg, policy));
    for (int h = 0; h < hours; ++h) {
      StateRecord& rec = records[d * hours + h];
      rec.state = day.hourly_states[h];
      // Saturated hours can land a few ulps above 1 from segment summation.
      rec.kpis[0] = std::min(1.0, day.hourly[h].busy_minutes / ops_minutes);
      rec.kpis[1] = day.hourly[h].max_wait_regular + day.hourly[h].max_wait_premium;
      rec.kpis[2] = day.hourly[h].churn;
    }
  });
  return records;
}

struct StateScenario {
  StateVector state;
  std::vector<std::array<double, 3>> observations;

  int count() const { return static_cast<int>(observations.size()); }

  EmpiricalDistribution distribution() const {
    Eigen::MatrixXd rows(observations.size(), 3);
    for (std::size_t i = 0; i < observations.size(); ++i)
      for (int j = 0; j < 3; ++j) rows(static_cast<Eigen::Index>(i), j) = observations[i][j];
    return EmpiricalDistribution::from_samples(rows);
  }
};

// Groups records by exact state equality and keeps states observed at least
// min_count times, ordered lexicographically by state.
inline std::vector<StateScenario> build_state_scenarios(const std::vector<StateRecord>& records, int min_count = 10) {
  if (records.empty()) throw ValidationError("no state records");
  if (min_count < 1) throw ValidationError("min_count must be >= 1");
  std::map<StateVector, std::vector<std::array<double, 3>>> groups;
  for (const auto& rec : records) groups[rec.state].push_back(rec.kpis);
  std::vector<StateScenario> out;
  for (auto& [state, obs] : groups)
    if (static_cast<int>(obs.size()) >= min_count) out.push_back(StateScenario{state, std::move(obs)});
  if (out.empty())
    throw ValidationError("no state reached " + std::to_string(min_count) + " observations; simulate more days");
  return out;
}

struct LabeledStateLibrary {
  struct Entry {
    StateVector state;
    int cluster = 0;
  };
  std::vector<Entry> entries;
  std::vector<int> ranking;                   // cluster ids, best quality first
  std::vector<std::string> ranking_names;     // optional display names aligned with ranking

  void validate() const {
    if (entries.empty()) throw ValidationError("empty state library");
    for (const auto& e : entries)
      if (std::find(ranking.begin(), ranking.end(), e.cluster) == ranking.end())
        throw ValidationError("library entry labeled with unranked cluster");
    if (!ranking_names.empty() && ranking_names.size() != ranking.size())
      throw ValidationError("ranking names must align with ranking");
  }

  int rank_of(int cluster) const {
    for (std::size_t r = 0; r < ranking.size(); ++r)
      if (ranking[r] == cluster) return static_cast<int>(r);
    return static_cast<int>(ranking.size());
  }

  std::string name_of(int cluster) const {
    int r = rank_of(cluster);
    if (!ranking_names.empty() && r < static_cast<int>(ranking_names.size())) return ranking_names[r];
    return "cluster" + std::to_string(cluster);
  }
};

struct Verdict {
  bool unanimous = false;
  std::vector<int> clusters;  // distinct neighbor labels, best rank first

  std::string describe(const LabeledStateLibrary& lib) const {
    if (unanimous) return lib.name_of(clusters.front());
    std::string s = "transition(";
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      if (i) s += '|';
      s += lib.name_of(clusters[i]);
    }
    return s + ")";
  }
};

// k nearest library states under euclidean distance on the raw queue counts;
// ties break on (distance, state lexicographic), so duplicate entries and
// library order cannot change the verdict.
inline Verdict knn_classify(const StateVector& state, const LabeledStateLibrary& lib, int k = 2) {
  lib.validate();
  if (k < 1 || k > static_cast<int>(lib.entries.size()))
    throw ValidationError("k must satisfy 1 <= k <= library size");
  struct Neighbor {
    long dist2;
    StateVector state;
    int cluster;
  };
  std::vector<Neighbor> neighbors;
  neighbors.reserve(lib.entries.size());
  for (const auto& e : lib.entries) {
    long d2 = 0;
    for (int j = 0; j < 4; ++j) {
      long d = e.state.queues[j] - state.queues[j];
      d2 += d * d;
    }
    neighbors.push_back({d2, e.state, e.cluster});
  }
  std::sort(neighbors.begin(), neighbors.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
    if (!(a.state == b.state)) return a.state < b.state;
    return a.cluster < b.cluster;
  });
  Verdict v;
  int taken = 0;
  for (std::size_t t = 0; t < neighbors.size() && taken < k; ++t) {
    // Duplicate library entries occupy one neighbor slot.
    if (t > 0 && neighbors[t].state == neighbors[t - 1].state && neighbors[t].cluster == neighbors[t - 1].cluster)
      continue;
    ++taken;
    int c = neighbors[t].cluster;
    if (std::find(v.clusters.begin(), v.clusters.end(), c) == v.clusters.end()) v.clusters.push_back(c);
  }
  std::sort(v.clusters.begin(), v.clusters.end(),
            [&](int a, int b) { return lib.rank_of(a) < lib.rank_of(b); });
  v.unanimous = v.clusters.size() == 1;
  return v;
}

struct TimelinePoint {
  double minutes = 0;
  Verdict verdict;
  bool closing_soon = false;
};

// Classifies a day's snapshots; points within one hour of close are flagged.
inline std::vector<TimelinePoint> monitor_timeline(const std::vector<std::pair<double, StateVector>>& trace,
                                                   const LabeledStateLibrary& lib, int k = 2,
                                                   double close_minutes = 480.0) {
  std::vector<TimelinePoint> out;
  out.reserve(trace.size());
  double prev = -std::numeric_limits<double>::infinity();
  for (const auto& [minutes, state] : trace) {
    if (minutes < prev) throw ValidationError("trace must be sorted by time");
    prev = minutes;
    out.push_back({minutes, knn_classify(state, lib, k), minutes >= close_minutes - 60.0});
  }
  return out;
}

}  // namespace wcluster
