#include <algorithm>
#include <array>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "wcluster/monitoring.hpp"
#include "wcluster/rng.hpp"

using wcluster::CallCenterConfig;
using wcluster::LabeledStateLibrary;
using wcluster::Staffing;
using wcluster::StateRecord;
using wcluster::StateVector;

namespace {

StateVector sv(int a, int b, int c, int d) { return StateVector{{a, b, c, d}}; }

// Three well-separated blocks of states with a shared quality ranking.
LabeledStateLibrary planted_library() {
  LabeledStateLibrary lib;
  const std::array<StateVector, 3> centers = {sv(0, 0, 0, 0), sv(12, 12, 12, 12),
                                              sv(40, 2, 40, 2)};
  for (int c = 0; c < 3; ++c) {
    for (int dx = -1; dx <= 1; ++dx) {
      for (int dy = -1; dy <= 1; ++dy) {
        StateVector s = centers[c];
        s.queues[0] = std::max(0, s.queues[0] + dx);
        s.queues[2] = std::max(0, s.queues[2] + dy);
        lib.entries.push_back({s, c});
      }
    }
  }
  lib.ranking = {0, 1, 2};
  lib.ranking_names = {"good", "moderate", "bad"};
  return lib;
}

}  // namespace

TEST_CASE("collect_states snapshots hour marks with bounded KPIs") {
  CallCenterConfig cfg;
  const Staffing staffing{22, 9, 8};
  const int days = 30;
  const auto records = wcluster::collect_states(cfg, staffing, days, 77);
  REQUIRE(records.size() == static_cast<std::size_t>(days) * 8);

  for (int d = 0; d < days; ++d) {
    CHECK((records[static_cast<std::size_t>(d) * 8].state == sv(0, 0, 0, 0)));
  }
  for (const auto& rec : records) {
    CHECK(rec.kpis[0] >= 0.0);
    CHECK(rec.kpis[0] <= 1.0);
    CHECK(rec.kpis[1] >= 0.0);
    CHECK(rec.kpis[2] >= 0.0);
    CHECK(rec.kpis[2] == std::floor(rec.kpis[2]));
    for (int q : rec.state.queues) CHECK(q >= 0);
  }
  CHECK_THROWS_AS(wcluster::collect_states(cfg, staffing, 0, 77),
                  wcluster::ValidationError);
}

TEST_CASE("hourly churn never exceeds the hour's arrivals") {
  CallCenterConfig cfg;
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    wcluster::RngPolicy policy{wcluster::RngMode::Crn, 21, rep, 0};
    const auto day = wcluster::simulate_day_detailed(
        cfg, Staffing{22, 9, 8}, wcluster::generate_population(cfg, policy));
    for (const auto& hour : day.hourly) {
      CHECK(hour.churn <= hour.arrivals);
    }
  }
}

TEST_CASE("an overstaffed day records zero churn everywhere") {
  CallCenterConfig cfg;
  const auto records =
      wcluster::collect_states(cfg, Staffing{1000, 1000, 1000}, 2, 5);
  for (const auto& rec : records) CHECK(rec.kpis[2] == 0.0);
}

TEST_CASE("state scenario grouping and the min-count filter") {
  std::vector<StateRecord> records;
  for (int i = 0; i < 10; ++i)
    records.push_back({sv(3, 1, 0, 0), {0.5, 1.0 * i, 0.0}});
  for (int i = 0; i < 9; ++i)
    records.push_back({sv(1, 0, 0, 0), {0.25, 0.0, 1.0}});

  SECTION("boundary at exactly min_count observations") {
    const auto kept = wcluster::build_state_scenarios(records, 10);
    REQUIRE(kept.size() == 1);
    CHECK((kept[0].state == sv(3, 1, 0, 0)));
    CHECK(kept[0].count() == 10);
  }
  SECTION("min_count one keeps every distinct state, ordered lexicographically") {
    const auto all = wcluster::build_state_scenarios(records, 1);
    REQUIRE(all.size() == 2);
    CHECK((all[0].state == sv(1, 0, 0, 0)));
    CHECK((all[1].state == sv(3, 1, 0, 0)));
  }
  SECTION("scenario observations become a weighted empirical distribution") {
    const auto kept = wcluster::build_state_scenarios(records, 9);
    const auto nine = kept[0].distribution();
    CHECK(nine.size() == 1);  // nine identical observations merge
    CHECK(std::abs(nine.weights().sum() - 1.0) < 1e-12);
    const auto ten = kept[1].distribution();
    CHECK(ten.size() == 10);
  }
  SECTION("errors") {
    CHECK_THROWS_AS(wcluster::build_state_scenarios({}, 10),
                    wcluster::ValidationError);
    CHECK_THROWS_AS(wcluster::build_state_scenarios(records, 0),
                    wcluster::ValidationError);
    CHECK_THROWS_AS(wcluster::build_state_scenarios(records, 50),
                    wcluster::ValidationError);
  }
}

TEST_CASE("library validation") {
  LabeledStateLibrary lib = planted_library();
  CHECK_NOTHROW(lib.validate());
  CHECK(lib.rank_of(2) == 2);
  CHECK(lib.name_of(0) == "good");

  SECTION("empty") {
    lib.entries.clear();
    CHECK_THROWS_AS(lib.validate(), wcluster::ValidationError);
  }
  SECTION("unranked label") {
    lib.entries.push_back({sv(1, 1, 1, 1), 9});
    CHECK_THROWS_AS(lib.validate(), wcluster::ValidationError);
  }
  SECTION("misaligned names") {
    lib.ranking_names.pop_back();
    CHECK_THROWS_AS(lib.validate(), wcluster::ValidationError);
  }
  SECTION("name fallback without ranking names") {
    lib.ranking_names.clear();
    CHECK(lib.name_of(1) == "cluster1");
  }
}

TEST_CASE("knn classification on the planted grid") {
  const LabeledStateLibrary lib = planted_library();

  SECTION("interior queries are classified perfectly") {
    const std::array<StateVector, 3> centers = {sv(0, 0, 0, 0),
                                                sv(12, 12, 12, 12),
                                                sv(40, 2, 40, 2)};
    for (int c = 0; c < 3; ++c) {
      const auto v = wcluster::knn_classify(centers[c], lib, 2);
      CHECK(v.unanimous);
      REQUIRE(v.clusters.size() == 1);
      CHECK(v.clusters[0] == c);
    }
  }

  SECTION("library member with agreeing neighbors keeps its own label") {
    const auto v = wcluster::knn_classify(lib.entries[4].state, lib, 2);
    CHECK(v.unanimous);
    CHECK(v.clusters[0] == lib.entries[4].cluster);
  }

  SECTION("equidistant query yields a transition verdict, best rank first") {
    LabeledStateLibrary two;
    two.entries = {{sv(0, 0, 0, 0), 0}, {sv(4, 0, 0, 0), 1}};
    two.ranking = {0, 1};
    two.ranking_names = {"good", "bad"};
    const auto v = wcluster::knn_classify(sv(2, 0, 0, 0), two, 2);
    CHECK_FALSE(v.unanimous);
    REQUIRE(v.clusters.size() == 2);
    CHECK(v.clusters[0] == 0);
    CHECK(v.clusters[1] == 1);
    CHECK(v.describe(two) == "transition(good|bad)");
    CHECK(wcluster::knn_classify(sv(0, 0, 0, 0), two, 1).describe(two) ==
          "good");
  }

  SECTION("invariant to library order and duplicated entries") {
    wcluster::SubstreamRng rng({0x6b6e6eULL, 4});
    LabeledStateLibrary shuffled = lib;
    for (std::size_t i = shuffled.entries.size(); i > 1; --i) {
      std::swap(shuffled.entries[i - 1],
                shuffled.entries[rng.next_u64() % i]);
    }
    LabeledStateLibrary doubled = lib;
    doubled.entries.insert(doubled.entries.end(), lib.entries.begin(),
                           lib.entries.end());

    for (int trial = 0; trial < 60; ++trial) {
      StateVector q = sv(static_cast<int>(rng.next_u64() % 45),
                         static_cast<int>(rng.next_u64() % 14),
                         static_cast<int>(rng.next_u64() % 45),
                         static_cast<int>(rng.next_u64() % 14));
      const auto base = wcluster::knn_classify(q, lib, 2);
      const auto s = wcluster::knn_classify(q, shuffled, 2);
      const auto d = wcluster::knn_classify(q, doubled, 2);
      CHECK(s.unanimous == base.unanimous);
      CHECK(s.clusters == base.clusters);
      CHECK(d.unanimous == base.unanimous);
      CHECK(d.clusters == base.clusters);
    }
  }

  SECTION("k bounds") {
    CHECK_THROWS_AS(wcluster::knn_classify(sv(0, 0, 0, 0), lib, 0),
                    wcluster::ValidationError);
    CHECK_THROWS_AS(
        wcluster::knn_classify(sv(0, 0, 0, 0), lib,
                               static_cast<int>(lib.entries.size()) + 1),
        wcluster::ValidationError);
    CHECK_NOTHROW(wcluster::knn_classify(
        sv(0, 0, 0, 0), lib, static_cast<int>(lib.entries.size())));
  }
}

TEST_CASE("timeline classification and the closing-soon flag") {
  const LabeledStateLibrary lib = planted_library();

  SECTION("all-empty trace gives uniform best-cluster verdicts") {
    std::vector<std::pair<double, StateVector>> trace;
    for (int h = 0; h < 8; ++h) trace.push_back({60.0 * h, sv(0, 0, 0, 0)});
    const auto timeline = wcluster::monitor_timeline(trace, lib, 2);
    REQUIRE(timeline.size() == 8);
    for (const auto& pt : timeline) {
      CHECK(pt.verdict.unanimous);
      CHECK(pt.verdict.clusters[0] == 0);
    }
  }

  SECTION("alternating planted interiors alternate verdicts") {
    std::vector<std::pair<double, StateVector>> trace;
    for (int i = 0; i < 6; ++i) {
      trace.push_back(
          {30.0 * i, i % 2 == 0 ? sv(0, 0, 0, 0) : sv(40, 2, 40, 2)});
    }
    const auto timeline = wcluster::monitor_timeline(trace, lib, 2);
    for (int i = 0; i < 6; ++i) {
      CHECK(timeline[i].verdict.clusters[0] == (i % 2 == 0 ? 0 : 2));
    }
  }

  SECTION("points within an hour of close are flagged") {
    std::vector<std::pair<double, StateVector>> trace = {
        {0.0, sv(0, 0, 0, 0)},
        {419.99, sv(0, 0, 0, 0)},
        {420.0, sv(0, 0, 0, 0)},
        {475.0, sv(0, 0, 0, 0)}};
    const auto timeline = wcluster::monitor_timeline(trace, lib, 2, 480.0);
    CHECK_FALSE(timeline[0].closing_soon);
    CHECK_FALSE(timeline[1].closing_soon);
    CHECK(timeline[2].closing_soon);
    CHECK(timeline[3].closing_soon);
  }

  SECTION("unsorted trace is rejected") {
    std::vector<std::pair<double, StateVector>> trace = {
        {60.0, sv(0, 0, 0, 0)}, {30.0, sv(0, 0, 0, 0)}};
    CHECK_THROWS_AS(wcluster::monitor_timeline(trace, lib, 2),
                    wcluster::ValidationError);
  }
}

TEST_CASE("a congested day drifts from good toward bad verdicts") {
  CallCenterConfig cfg;
  const Staffing staffing{22, 9, 8};

  // Offline: collect states and rank the recurring ones by their mean summed
  // maximum wait, in terciles. Exact queue states rarely repeat, so the
  // recurrence bar stays low.
  const auto records = wcluster::collect_states(cfg, staffing, 400, 13);
  const auto scenarios = wcluster::build_state_scenarios(records, 2);
  REQUIRE(scenarios.size() >= 30);

  std::vector<double> waits;
  for (const auto& sc : scenarios) {
    double m = 0;
    for (const auto& obs : sc.observations) m += obs[1];
    waits.push_back(m / sc.count());
  }
  std::vector<double> sorted = waits;
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted[sorted.size() / 3];
  const double hi = sorted[(2 * sorted.size()) / 3];

  LabeledStateLibrary lib;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const int label = waits[i] <= lo ? 0 : (waits[i] <= hi ? 1 : 2);
    lib.entries.push_back({scenarios[i].state, label});
  }
  lib.ranking = {0, 1, 2};
  lib.ranking_names = {"good", "moderate", "bad"};
  lib.validate();

  // Online: classify a fresh day not used in the library.
  wcluster::RngPolicy policy{wcluster::RngMode::Crn, 14, 1000, 0};
  std::vector<double> times;
  for (int h = 0; h < 8; ++h) times.push_back(60.0 * h);
  const auto day = wcluster::simulate_day_detailed(
      cfg, staffing, wcluster::generate_population(cfg, policy), nullptr,
      &times);
  const auto timeline = wcluster::monitor_timeline(day.trace, lib, 2);
  REQUIRE(timeline.size() == 8);

  auto best_rank = [&](const wcluster::Verdict& v) {
    return lib.rank_of(v.clusters.front());
  };
  CHECK(best_rank(timeline.front().verdict) == 0);
  CHECK(best_rank(timeline.back().verdict) >=
        best_rank(timeline.front().verdict));
  CHECK(best_rank(timeline.back().verdict) >= 1);
}

TEST_CASE("five thousand days reproduce the expected state inventory") {
  CallCenterConfig cfg;
  const auto records =
      wcluster::collect_states(cfg, Staffing{22, 9, 8}, 5000, 1);
  REQUIRE(records.size() == 40000);
  const auto scenarios = wcluster::build_state_scenarios(records, 10);
  const auto n = scenarios.size();
  CHECK(n >= 90);
  CHECK(n <= 136);
}
