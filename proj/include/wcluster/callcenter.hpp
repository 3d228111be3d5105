#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "wcluster/common.hpp"
#include "wcluster/distribution.hpp"
#include "wcluster/rng.hpp"
#include "wcluster/thread_pool.hpp"

namespace wcluster {

struct CallCenterConfig {
  double open_hours = 8.0;
  double arrival_rate_per_hour = 400.0;
  double premium_fraction = 0.4;
  double impatient_fraction = 0.15;
  double patience_min_minutes = 0.5;
  double patience_max_minutes = 3.0;
  double technical_fraction = 0.15;
  double mean_service_basic = 7.0;
  double mean_service_premium = 3.0;
  double mean_service_technical = 10.0;

  double open_minutes() const { return open_hours * 60.0; }

  void validate() const {
    if (!(open_hours > 0)) throw ValidationError("open_hours must be > 0");
    if (!(arrival_rate_per_hour > 0)) throw ValidationError("arrival rate must be > 0");
    auto frac = [](double f) { return f >= 0 && f <= 1; };
    if (!frac(premium_fraction) || !frac(impatient_fraction) || !frac(technical_fraction))
      throw ValidationError("fractions must lie in [0, 1]");
    if (!(patience_min_minutes > 0) || !(patience_min_minutes < patience_max_minutes))
      throw ValidationError("patience bounds must satisfy 0 < lower < upper");
    if (!(mean_service_basic > 0) || !(mean_service_premium > 0) || !(mean_service_technical > 0))
      throw ValidationError("service means must be > 0");
  }
};

// Operator counts by role. Zero counts are representable because budget
// enumeration universes may include them; simulation demands at least one
// operator of each type.
struct Staffing {
  int basic = 1;
  int premium = 1;
  int technical = 1;

  int total() const { return basic + premium + technical; }

  void validate_counts() const {
    if (basic < 0 || premium < 0 || technical < 0) throw ValidationError("staffing counts must be >= 0");
  }

  void validate_for_simulation() const {
    if (basic < 1 || premium < 1 || technical < 1)
      throw ValidationError("simulation requires at least one operator of each type");
  }

  bool operator==(const Staffing&) const = default;

  std::string id() const {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "p%03d_b%03d_t%03d", premium, basic, technical);
    return buf;
  }
};

enum class RngMode { Independent, Crn };

inline const char* rng_mode_name(RngMode m) { return m == RngMode::Crn ? "crn" : "independent"; }

inline RngMode rng_mode_from_name(const std::string& s) {
  if (s == "crn") return RngMode::Crn;
  if (s == "independent") return RngMode::Independent;
  throw ValidationError("unknown rng mode: " + s);
}

struct RngPolicy {
  RngMode mode = RngMode::Crn;
  std::uint64_t seed = 1;
  std::uint64_t replication_index = 0;
  std::uint64_t scenario_index = 0;  // ignored under crn

  std::uint64_t scenario_key() const { return mode == RngMode::Crn ? 0 : scenario_index + 1; }
};

struct ReplicationOutput {
  // Y1, Y2: mean time in system (minutes) for completed regular / premium
  // customers. Y3..Y5: mean after-close busy minutes per operator of the
  // basic / premium / technical type.
  std::array<double, 5> kpis{};
};

inline const std::array<const char*, 5>& kpi_names() {
  static const std::array<const char*, 5> names = {"mean_time_regular", "mean_time_premium", "overwork_basic",
                                                   "overwork_premium", "overwork_technical"};
  return names;
}

struct Customer {
  double arrival = 0;
  double patience = 0;
  double u_initial = 0;
  double u_technical = 0;
  bool premium = false;
  bool impatient = false;
  bool technical = false;
};

namespace detail {

enum Purpose : std::uint64_t {
  kPurposeInterarrival = 1,
  kPurposeClass = 2,
  kPurposeImpatient = 3,
  kPurposePatience = 4,
  kPurposeTechnical = 5,
  kPurposeServiceInitial = 6,
  kPurposeServiceTechnical = 7,
};

inline double attribute_unit(std::uint64_t seed, std::uint64_t rep, std::uint64_t scenario_key, Purpose purpose,
                             std::uint64_t customer) {
  std::uint64_t bits = hash_words({seed, rep, scenario_key, purpose, customer}) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace detail

// Every stochastic ingredient of a day, pre-drawn per customer from named
// substreams. Under crn the scenario key is constant, so the population for
// (seed, replication) is identical across staffings.
inline std::vector<Customer> generate_population(const CallCenterConfig& cfg, const RngPolicy& policy) {
  cfg.validate();
  const std::uint64_t key = policy.scenario_key();
  SubstreamRng inter({policy.seed, policy.replication_index, key, detail::kPurposeInterarrival});
  const double mean_interarrival = 60.0 / cfg.arrival_rate_per_hour;
  const double close = cfg.open_minutes();
  std::vector<Customer> population;
  population.reserve(static_cast<std::size_t>(cfg.arrival_rate_per_hour * cfg.open_hours * 1.2) + 16);
  double t = 0;
  std::uint64_t idx = 0;
  while (true) {
    t += inter.next_exponential(mean_interarrival);
    if (t >= close) break;
    Customer c;
    c.arrival = t;
    c.premium = detail::attribute_unit(policy.seed, policy.replication_index, key, detail::kPurposeClass, idx) <
                cfg.premium_fraction;
    c.impatient = detail::attribute_unit(policy.seed, policy.replication_index, key, detail::kPurposeImpatient, idx) <
                  cfg.impatient_fraction;
    c.patience = cfg.patience_min_minutes +
                 (cfg.patience_max_minutes - cfg.patience_min_minutes) *
                     detail::attribute_unit(policy.seed, policy.replication_index, key, detail::kPurposePatience, idx);
    c.technical = detail::attribute_unit(policy.seed, policy.replication_index, key, detail::kPurposeTechnical, idx) <
                  cfg.technical_fraction;
    c.u_initial =
        detail::attribute_unit(policy.seed, policy.replication_index, key, detail::kPurposeServiceInitial, idx);
    c.u_technical =
        detail::attribute_unit(policy.seed, policy.replication_index, key, detail::kPurposeServiceTechnical, idx);
    population.push_back(c);
    ++idx;
  }
  return population;
}

struct HourWindow {
  double busy_minutes = 0;
  double max_wait_regular = 0;
  double max_wait_premium = 0;
  int churn = 0;
  int arrivals = 0;
};

struct StateVector {
  std::array<int, 4> queues{};  // regular-initial, premium-initial, regular-technical, premium-technical

  bool operator==(const StateVector&) const = default;
  bool operator<(const StateVector& o) const { return queues < o.queues; }
};

// Optional event-log audit: service-start records plus a post-dispatch idle
// check at every event epoch.
struct SimulationAudit {
  struct ServiceStart {
    double time = 0;
    int op_type = 0;  // 0 basic, 1 premium, 2 technical
    bool customer_premium = false;
    bool technical_stage = false;
    int waiting_premium_initial = 0;
    int waiting_premium_technical = 0;
  };
  struct IdleCheck {
    double time = 0;
    std::array<int, 3> free_ops{};
    int waiting_regular = 0;
    int waiting_premium = 0;
    int waiting_tech_regular = 0;
    int waiting_tech_premium = 0;
  };
  std::vector<ServiceStart> starts;
  std::vector<IdleCheck> checks;
};

struct DayResult {
  ReplicationOutput output;
  long arrivals = 0;
  long completions = 0;
  long abandonments = 0;
  long impatient_arrivals = 0;
  std::array<StateVector, 8> hourly_states{};
  std::array<HourWindow, 8> hourly{};
  std::vector<std::pair<double, StateVector>> trace;  // states at the requested trace_times
};

// One day of operation: multiclass FIFO queues, premium-first routing for
// premium operators, non-preemptive premium priority in the technical queue,
// abandonment only from the initial queues, arrivals cut at close, full drain
// afterwards. Event ties resolve by insertion order.
inline DayResult simulate_day_detailed(const CallCenterConfig& cfg, const Staffing& staffing,
                                       const std::vector<Customer>& population, SimulationAudit* audit = nullptr,
                                       const std::vector<double>* trace_times = nullptr) {
  cfg.validate();
  staffing.validate_for_simulation();
  const double close = cfg.open_minutes();
  const int n = static_cast<int>(population.size());

  enum Kind : int { kArrival, kAbandon, kInitialDone, kTechDone, kSnapshot };
  enum Phase : unsigned char { kPending, kWaitInitial, kInInitial, kWaitTech, kInTech, kAbandoned, kDone };
  enum OpType : int { kBasic = 0, kPremiumOp = 1, kTechOp = 2 };

  struct Event {
    double time;
    std::uint64_t seq;
    int kind;
    int cust;
    int aux;
  };
  struct EventAfter {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      return a.seq > b.seq;
    }
  };
  std::priority_queue<Event, std::vector<Event>, EventAfter> heap;
  std::uint64_t seq = 0;
  auto schedule = [&](double time, int kind, int cust, int aux) { heap.push(Event{time, seq++, kind, cust, aux}); };

  DayResult day;
  const int hours = static_cast<int>(day.hourly.size());
  for (int h = 0; h < hours; ++h) schedule(60.0 * h, kSnapshot, -1, h);
  if (trace_times) {
    day.trace.resize(trace_times->size());
    for (std::size_t i = 0; i < trace_times->size(); ++i) {
      day.trace[i].first = (*trace_times)[i];
      schedule((*trace_times)[i], kSnapshot, -1, hours + static_cast<int>(i));
    }
  }
  for (int c = 0; c < n; ++c) schedule(population[c].arrival, kArrival, c, 0);

  std::vector<Phase> phase(n, kPending);
  std::vector<double> tech_enqueue(n, 0);
  std::deque<int> q_reg, q_prem, q_tech_reg, q_tech_prem;
  int waiting_reg = 0, waiting_prem = 0;
  std::array<int, 3> free_ops = {staffing.basic, staffing.premium, staffing.technical};
  std::array<double, 3> overwork_total = {0, 0, 0};
  double sojourn_reg = 0, sojourn_prem = 0;
  long done_reg = 0, done_prem = 0;

  auto hour_bin = [&](double t) { return static_cast<int>(t / 60.0); };
  auto add_busy = [&](int op_type, double start, double end) {
    double over = end - std::max(start, close);
    if (over > 0) overwork_total[op_type] += over;
    double cs = start, ce = std::min(end, close);
    int b = hour_bin(cs);
    while (cs < ce && b < hours) {
      double bin_end = 60.0 * (b + 1);
      double seg = std::min(ce, bin_end) - cs;
      if (seg > 0) day.hourly[b].busy_minutes += seg;
      cs = bin_end;
      ++b;
    }
  };

  auto front_waiting = [&](std::deque<int>& q, Phase want) {
    while (!q.empty()) {
      int c = q.front();
      if (phase[c] == want) return c;
      q.pop_front();
    }
    return -1;
  };

  double now = 0;
  auto start_initial = [&](std::deque<int>& q, int c, int op_type) {
    q.pop_front();
    const Customer& cust = population[c];
    (cust.premium ? waiting_prem : waiting_reg) -= 1;
    phase[c] = kInInitial;
    --free_ops[op_type];
    double mean = op_type == kBasic ? cfg.mean_service_basic : cfg.mean_service_premium;
    double duration = -mean * std::log(cust.u_initial);
    add_busy(op_type, now, now + duration);
    schedule(now + duration, kInitialDone, c, op_type);
    if (audit)
      audit->starts.push_back({now, op_type, cust.premium, false, front_waiting(q_prem, kWaitInitial) >= 0 ? 1 : 0,
                               front_waiting(q_tech_prem, kWaitTech) >= 0 ? 1 : 0});
  };
  auto start_technical = [&](std::deque<int>& q, int c) {
    int prem_tech_waiting = front_waiting(q_tech_prem, kWaitTech) >= 0 ? 1 : 0;
    q.pop_front();
    const Customer& cust = population[c];
    phase[c] = kInTech;
    --free_ops[kTechOp];
    double wait = now - tech_enqueue[c];
    int b = hour_bin(now);
    if (now < close && b < hours) {
      auto& h = day.hourly[b];
      if (cust.premium) h.max_wait_premium = std::max(h.max_wait_premium, wait);
      else h.max_wait_regular = std::max(h.max_wait_regular, wait);
    }
    double duration = -cfg.mean_service_technical * std::log(cust.u_technical);
    add_busy(kTechOp, now, now + duration);
    schedule(now + duration, kTechDone, c, kTechOp);
    if (audit) audit->starts.push_back({now, kTechOp, cust.premium, true, 0, cust.premium ? 0 : prem_tech_waiting});
  };

  auto dispatch = [&]() {
    while (true) {
      int c;
      if (free_ops[kBasic] > 0 && (c = front_waiting(q_reg, kWaitInitial)) >= 0) {
        start_initial(q_reg, c, kBasic);
        continue;
      }
      if (free_ops[kPremiumOp] > 0) {
        if ((c = front_waiting(q_prem, kWaitInitial)) >= 0) {
          start_initial(q_prem, c, kPremiumOp);
          continue;
        }
        if ((c = front_waiting(q_reg, kWaitInitial)) >= 0) {
          start_initial(q_reg, c, kPremiumOp);
          continue;
        }
      }
      if (free_ops[kTechOp] > 0) {
        if ((c = front_waiting(q_tech_prem, kWaitTech)) >= 0) {
          start_technical(q_tech_prem, c);
          continue;
        }
        if ((c = front_waiting(q_tech_reg, kWaitTech)) >= 0) {
          start_technical(q_tech_reg, c);
          continue;
        }
      }
      break;
    }
  };

  auto finish = [&](int c) {
    phase[c] = kDone;
    ++day.completions;
    const Customer& cust = population[c];
    double sojourn = now - cust.arrival;
    if (cust.premium) {
      sojourn_prem += sojourn;
      ++done_prem;
    } else {
      sojourn_reg += sojourn;
      ++done_reg;
    }
  };

  while (!heap.empty()) {
    Event ev = heap.top();
    heap.pop();
    now = ev.time;
    switch (ev.kind) {
      case kArrival: {
        const Customer& cust = population[ev.cust];
        ++day.arrivals;
        if (cust.impatient) ++day.impatient_arrivals;
        int b = hour_bin(now);
        if (b < hours) ++day.hourly[b].arrivals;
        phase[ev.cust] = kWaitInitial;
        if (cust.premium) {
          q_prem.push_back(ev.cust);
          ++waiting_prem;
        } else {
          q_reg.push_back(ev.cust);
          ++waiting_reg;
        }
        if (cust.impatient) schedule(now + cust.patience, kAbandon, ev.cust, 0);
        dispatch();
        break;
      }
      case kAbandon: {
        if (phase[ev.cust] == kWaitInitial) {
          phase[ev.cust] = kAbandoned;
          ++day.abandonments;
          (population[ev.cust].premium ? waiting_prem : waiting_reg) -= 1;
          int b = hour_bin(now);
          if (b < hours) ++day.hourly[b].churn;
        }
        break;
      }
      case kInitialDone: {
        ++free_ops[ev.aux];
        const Customer& cust = population[ev.cust];
        if (cust.technical) {
          phase[ev.cust] = kWaitTech;
          tech_enqueue[ev.cust] = now;
          if (cust.premium) q_tech_prem.push_back(ev.cust);
          else q_tech_reg.push_back(ev.cust);
        } else {
          finish(ev.cust);
        }
        dispatch();
        break;
      }
      case kTechDone: {
        ++free_ops[kTechOp];
        finish(ev.cust);
        dispatch();
        break;
      }
      case kSnapshot: {
        auto count_tech = [&](std::deque<int>& q) {
          int count = 0;
          for (int c : q)
            if (phase[c] == kWaitTech) ++count;
          return count;
        };
        StateVector state{{waiting_reg, waiting_prem, count_tech(q_tech_reg), count_tech(q_tech_prem)}};
        if (ev.aux < hours)
          day.hourly_states[ev.aux] = state;
        else
          day.trace[static_cast<std::size_t>(ev.aux - hours)].second = state;
        break;
      }
    }
    if (audit) {
      auto count_tech = [&](std::deque<int>& q) {
        int count = 0;
        for (int c : q)
          if (phase[c] == kWaitTech) ++count;
        return count;
      };
      audit->checks.push_back(
          {now, free_ops, waiting_reg, waiting_prem, count_tech(q_tech_reg), count_tech(q_tech_prem)});
    }
  }

  day.output.kpis[0] = done_reg > 0 ? sojourn_reg / done_reg : 0.0;
  day.output.kpis[1] = done_prem > 0 ? sojourn_prem / done_prem : 0.0;
  day.output.kpis[2] = overwork_total[kBasic] / staffing.basic;
  day.output.kpis[3] = overwork_total[kPremiumOp] / staffing.premium;
  day.output.kpis[4] = overwork_total[kTechOp] / staffing.technical;
  return day;
}

inline ReplicationOutput simulate_day(const CallCenterConfig& cfg, const Staffing& staffing, const RngPolicy& policy) {
  return simulate_day_detailed(cfg, staffing, generate_population(cfg, policy)).output;
}

struct ScenarioRun {
  std::vector<Eigen::MatrixXd> raw;  // per scenario, n_replications x 5, in replication order
  std::vector<EmpiricalDistribution> distributions;
};

// Simulates every staffing for n_replications days. Under crn, replication r
// of every staffing consumes the identical customer population; under
// independent sampling the scenario index enters the stream key.
inline ScenarioRun run_scenarios(const CallCenterConfig& cfg, const std::vector<Staffing>& staffings,
                                 int n_replications, RngMode mode, std::uint64_t seed, int n_threads = 1) {
  cfg.validate();
  if (staffings.empty()) throw ValidationError("no staffings to simulate");
  if (n_replications < 1) throw ValidationError("n_replications must be >= 1");
  for (const auto& s : staffings) s.validate_for_simulation();

  ScenarioRun run;
  run.raw.assign(staffings.size(), Eigen::MatrixXd(n_replications, 5));
  const std::size_t tasks = staffings.size() * static_cast<std::size_t>(n_replications);
  parallel_for(tasks, n_threads, [&](std::size_t t) {
    const std::size_t s = t / static_cast<std::size_t>(n_replications);
    const int r = static_cast<int>(t % static_cast<std::size_t>(n_replications));
    RngPolicy policy{mode, seed, static_cast<std::uint64_t>(r), s};
    ReplicationOutput out = simulate_day(cfg, staffings[s], policy);
    for (int j = 0; j < 5; ++j) run.raw[s](r, j) = out.kpis[j];
  });
  run.distributions.reserve(staffings.size());
  for (const auto& m : run.raw) run.distributions.push_back(EmpiricalDistribution::from_samples(m));
  return run;
}

// All compositions of `total` into three positive parts.
inline std::vector<Staffing> enumerate_fixed_total(int total) {
  if (total < 3) throw ValidationError("total must be >= 3");
  std::vector<Staffing> out;
  out.reserve(static_cast<std::size_t>(total - 1) * (total - 2) / 2);
  for (int premium = 1; premium <= total - 2; ++premium)
    for (int basic = 1; basic <= total - premium - 1; ++basic)
      out.push_back(Staffing{basic, premium, total - premium - basic});
  return out;
}

struct BudgetSpec {
  std::array<int, 3> cost_per_type = {4, 1, 1};  // premium, basic, technical
  int budget_min = 50;
  int budget_max = 55;
  std::array<int, 3> min_count = {1, 1, 1};  // premium, basic, technical
  std::array<int, 3> max_count = {std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
                                  std::numeric_limits<int>::max()};
};

// All staffings whose cost lands inside the budget window, subject to
// per-type bounds. Cost = cost[0]*premium + cost[1]*basic + cost[2]*technical.
inline std::vector<Staffing> enumerate_budget(const BudgetSpec& spec) {
  if (spec.budget_min > spec.budget_max) throw ValidationError("budget range is empty");
  for (int c : spec.cost_per_type)
    if (c < 1) throw ValidationError("per-type costs must be >= 1");
  for (int t = 0; t < 3; ++t)
    if (spec.min_count[t] < 0 || spec.min_count[t] > spec.max_count[t])
      throw ValidationError("invalid per-type count bounds");
  std::vector<Staffing> out;
  const auto& cost = spec.cost_per_type;
  const int premium_hi = std::min(spec.max_count[0], spec.budget_max / cost[0]);
  for (int premium = spec.min_count[0]; premium <= premium_hi; ++premium) {
    const int basic_hi = std::min(spec.max_count[1], (spec.budget_max - premium * cost[0]) / cost[1]);
    for (int basic = spec.min_count[1]; basic <= basic_hi; ++basic) {
      const int used = premium * cost[0] + basic * cost[1];
      int tech_lo = spec.min_count[2];
      if (used + tech_lo * cost[2] < spec.budget_min)
        tech_lo = (spec.budget_min - used + cost[2] - 1) / cost[2];
      const int tech_hi = std::min(spec.max_count[2], (spec.budget_max - used) / cost[2]);
      for (int technical = tech_lo; technical <= tech_hi; ++technical)
        out.push_back(Staffing{basic, premium, technical});
    }
  }
  if (out.empty()) throw ValidationError("no staffing satisfies the budget constraints");
  return out;
}

// Greedy maximin (farthest point) subset in staffing-count space. The seed
// picks the probe configuration; the first selected point is the one farthest
// from the probe, then each pick maximizes the distance to the selected set.
// Ties go to the lowest index. Returns the subset in original-index order.
inline std::vector<Staffing> uniform_subset(const std::vector<Staffing>& configs, int n, std::uint64_t seed) {
  if (n < 0 || static_cast<std::size_t>(n) > configs.size())
    throw ValidationError("subset size must satisfy 0 <= n <= list length");
  if (static_cast<std::size_t>(n) == configs.size()) return configs;
  std::vector<Staffing> out;
  if (n == 0) return out;
  auto dist2 = [](const Staffing& a, const Staffing& b) {
    double db = a.basic - b.basic, dp = a.premium - b.premium, dt = a.technical - b.technical;
    return db * db + dp * dp + dt * dt;
  };
  SubstreamRng rng({seed, 0x73756273ULL});
  const std::size_t probe = static_cast<std::size_t>(rng.next_u64() % configs.size());
  // The probe only seeds the first pick; it must not contaminate the
  // distances to the chosen set.
  std::size_t pick = 0;
  double farthest = -1;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    double d = dist2(configs[i], configs[probe]);
    if (d > farthest) {
      farthest = d;
      pick = i;
    }
  }
  std::vector<double> min_dist(configs.size(), std::numeric_limits<double>::infinity());
  std::vector<char> selected(configs.size(), 0);
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (int round = 0; round < n; ++round) {
    selected[pick] = 1;
    chosen.push_back(pick);
    if (round + 1 == n) break;
    for (std::size_t i = 0; i < configs.size(); ++i)
      min_dist[i] = std::min(min_dist[i], dist2(configs[i], configs[pick]));
    pick = 0;
    double best = -1;
    for (std::size_t i = 0; i < configs.size(); ++i) {
      if (selected[i]) continue;
      if (min_dist[i] > best) {
        best = min_dist[i];
        pick = i;
      }
    }
  }
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t i : chosen) out.push_back(configs[i]);
  return out;
}

}  // namespace wcluster
