#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <wcluster/wcluster.hpp>

namespace fs = std::filesystem;
using namespace wcluster;

namespace {

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) throw ValidationError(std::string(what) + ": empty element in '" + text + "'");
    out.push_back(static_cast<int>(parse_double(cur)));
    cur.clear();
  };
  for (char ch : text) {
    if (ch == ',')
      flush();
    else if (ch != ' ')
      cur += ch;
  }
  flush();
  return out;
}

std::string pad4(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

// Staffing triples are (premium, basic, technical) everywhere in manifests
// and on the command line, matching the scenario id format pNNN_bNNN_tNNN.
Json staffing_to_json(const Staffing& s) { return Json::array({s.premium, s.basic, s.technical}); }

Staffing staffing_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw ValidationError("staffing must be [premium, basic, technical]");
  Staffing s{j[1].get<int>(), j[0].get<int>(), j[2].get<int>()};
  s.validate_counts();
  return s;
}

Json sim_to_json(const CallCenterConfig& c) {
  return Json{{"open_hours", c.open_hours},
              {"arrival_rate_per_hour", c.arrival_rate_per_hour},
              {"premium_fraction", c.premium_fraction},
              {"impatient_fraction", c.impatient_fraction},
              {"patience_min_minutes", c.patience_min_minutes},
              {"patience_max_minutes", c.patience_max_minutes},
              {"technical_fraction", c.technical_fraction},
              {"mean_service_basic", c.mean_service_basic},
              {"mean_service_premium", c.mean_service_premium},
              {"mean_service_technical", c.mean_service_technical}};
}

CallCenterConfig sim_from_json(const Json& j) {
  CallCenterConfig c;
  auto get = [&](const char* key, double& slot) {
    if (j.contains(key)) slot = j.at(key).get<double>();
  };
  get("open_hours", c.open_hours);
  get("arrival_rate_per_hour", c.arrival_rate_per_hour);
  get("premium_fraction", c.premium_fraction);
  get("impatient_fraction", c.impatient_fraction);
  get("patience_min_minutes", c.patience_min_minutes);
  get("patience_max_minutes", c.patience_max_minutes);
  get("technical_fraction", c.technical_fraction);
  get("mean_service_basic", c.mean_service_basic);
  get("mean_service_premium", c.mean_service_premium);
  get("mean_service_technical", c.mean_service_technical);
  c.validate();
  return c;
}

SinkhornConfig::Domain domain_from_name(const std::string& name) {
  if (name == "auto") return SinkhornConfig::Domain::Auto;
  if (name == "scaling") return SinkhornConfig::Domain::Scaling;
  if (name == "log") return SinkhornConfig::Domain::Log;
  throw ValidationError("unknown sinkhorn domain: " + name);
}

SinkhornConfig sinkhorn_from_manifest(const Json& m) {
  SinkhornConfig sk;
  sk.lambda = m.at("lambda").get<double>();
  sk.tolerance = m.at("tolerance").get<double>();
  sk.max_iterations = m.at("max_iterations").get<int>();
  sk.domain = domain_from_name(m.at("domain").get<std::string>());
  sk.validate();
  return sk;
}

BarycenterConfig bary_from_manifest(const Json& m) {
  const Json& b = m.at("bary");
  BarycenterConfig cfg;
  cfg.support_size = b.at("support_size").get<int>();
  cfg.lambda = b.at("lambda").get<double>();
  cfg.theta = b.at("theta").get<double>();
  cfg.t0 = b.at("t0").get<double>();
  cfg.outer_tolerance = b.at("outer_tolerance").get<double>();
  cfg.max_outer_iterations = b.at("max_outer_iterations").get<int>();
  cfg.metric = metric_from_name(b.at("metric").get<std::string>());
  cfg.seed = m.at("seed").get<std::uint64_t>();
  cfg.sinkhorn_tolerance = b.at("sinkhorn_tolerance").get<double>();
  cfg.sinkhorn_max_iterations = b.at("sinkhorn_max_iterations").get<int>();
  cfg.validate();
  return cfg;
}

Json bary_defaults(int support_size, double lambda, int max_outer) {
  return Json{{"support_size", support_size}, {"lambda", lambda},
              {"theta", 1.0},                 {"t0", 1.0},
              {"outer_tolerance", 1e-5},      {"max_outer_iterations", max_outer},
              {"metric", "squared_euclidean"}, {"sinkhorn_tolerance", 1e-9},
              {"sinkhorn_max_iterations", 20000}};
}

void merge_manifest_file(Json& manifest, const std::string& path) {
  if (path.empty()) return;
  Json file = Json::parse(read_text_file(path));
  if (!file.is_object()) throw ValidationError("manifest file must hold a JSON object: " + path);
  if (file.contains("command") && file.at("command") != manifest.at("command"))
    throw ValidationError("manifest file is for command '" + file.at("command").get<std::string>() +
                          "', invoked '" + manifest.at("command").get<std::string>() + "'");
  for (const auto& [key, value] : file.items()) manifest[key] = value;
}

fs::path prepare_out(const Json& manifest) {
  fs::path out = manifest.at("out").get<std::string>();
  fs::create_directories(out);
  return out;
}

void write_run_meta(const fs::path& out, const Json& manifest, Json extra = Json::object()) {
  Json meta;
  meta["version"] = kVersion;
  meta["hash"] = manifest_hash(manifest);
  meta["manifest"] = canonical_manifest(manifest);
  for (const auto& [key, value] : extra.items()) meta[key] = value;
  write_text_file(out / "run_meta.json", meta.dump(2) + "\n");
}

std::vector<std::string> kpi_columns() {
  return std::vector<std::string>(kpi_names().begin(), kpi_names().end());
}

// ---------------------------------------------------------------------------
// simulate

std::vector<Staffing> build_universe(const Json& m) {
  const std::string universe = m.at("universe").get<std::string>();
  if (universe == "fixed-total") return enumerate_fixed_total(m.at("total").get<int>());
  if (universe == "budget") {
    const Json& b = m.at("budget");
    BudgetSpec spec;
    auto triple = [&](const char* key, std::array<int, 3>& slot, bool unbounded_ok) {
      if (!b.contains(key)) return;
      auto v = b.at(key).get<std::vector<int>>();
      if (v.size() != 3) throw ValidationError(std::string("budget.") + key + " must have 3 entries");
      for (int t = 0; t < 3; ++t)
        slot[t] = (unbounded_ok && v[t] < 0) ? std::numeric_limits<int>::max() : v[t];
    };
    triple("cost", spec.cost_per_type, false);
    spec.budget_min = b.at("min").get<int>();
    spec.budget_max = b.at("max").get<int>();
    triple("min_count", spec.min_count, false);
    triple("max_count", spec.max_count, true);
    return enumerate_budget(spec);
  }
  if (universe == "explicit") {
    std::vector<Staffing> out;
    for (const auto& j : m.at("staffings")) out.push_back(staffing_from_json(j));
    if (out.empty()) throw ValidationError("explicit universe needs at least one --staffing");
    return out;
  }
  throw ValidationError("unknown universe: " + universe);
}

int run_simulate(const Json& m) {
  CallCenterConfig cfg = sim_from_json(m.at("sim"));
  std::vector<Staffing> staffings = build_universe(m);
  const std::uint64_t seed = m.at("seed").get<std::uint64_t>();
  const int select = m.at("select").get<int>();
  if (select > 0 && select < static_cast<int>(staffings.size()))
    staffings = uniform_subset(staffings, select, m.at("subset_seed").get<std::uint64_t>());
  for (const auto& s : staffings) s.validate_for_simulation();

  ScenarioRun run = run_scenarios(cfg, staffings, m.at("reps").get<int>(),
                                  rng_mode_from_name(m.at("mode").get<std::string>()), seed,
                                  m.at("threads").get<int>());

  const std::string hash = manifest_hash(m);
  const fs::path out = prepare_out(m);
  std::vector<std::string> ids;
  ids.reserve(staffings.size());
  for (std::size_t i = 0; i < staffings.size(); ++i) {
    const std::string id = staffings[i].id();
    ids.push_back(id);
    write_numeric_csv(out / ("scenario_" + pad4(i) + "_" + id + ".csv"), kpi_columns(), run.raw[i],
                      {{"manifest", hash}, {"scenario", id}, {"index", std::to_string(i)}});
  }
  write_run_meta(out, m, Json{{"scenarios", ids}, {"kpis", kpi_columns()}});
  std::cout << "simulate: " << staffings.size() << " scenarios x " << m.at("reps").get<int>()
            << " replications -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// cluster

struct ScenarioData {
  std::vector<std::string> ids;
  std::vector<EmpiricalDistribution> dists;
  std::vector<std::string> columns;
};

ScenarioData load_scenarios(const fs::path& in) {
  std::vector<fs::path> files;
  if (!fs::is_directory(in)) throw ValidationError("not a directory: " + in.string());
  for (const auto& entry : fs::directory_iterator(in)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("scenario_", 0) == 0 && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no scenario_*.csv files in " + in.string());

  ScenarioData data;
  for (const auto& file : files) {
    CsvContent csv = read_csv(file);
    if (data.columns.empty())
      data.columns = csv.columns;
    else if (csv.columns != data.columns)
      throw ValidationError("scenario files disagree on columns: " + file.string());
    auto it = csv.meta.find("scenario");
    data.ids.push_back(it != csv.meta.end() ? it->second : file.stem().string());
    data.dists.push_back(EmpiricalDistribution::from_samples(csv.numeric()));
  }
  return data;
}

int run_cluster(const Json& m) {
  ScenarioData data = load_scenarios(m.at("in").get<std::string>());
  if (data.dists.size() < 3) throw ValidationError("clustering needs at least 3 scenarios");
  SinkhornConfig sk = sinkhorn_from_manifest(m);
  DistanceMatrix dm = pairwise_distances(data.dists, sk, metric_from_name(m.at("metric").get<std::string>()),
                                         m.at("normalize").get<bool>(), m.at("threads").get<int>(), &data.ids);
  Dendrogram dendro = agglomerate(dm);
  auto table = silhouette_by_level(dendro, dm);
  Clustering selected = select_clustering(dendro, dm);

  const std::string hash = manifest_hash(m);
  const fs::path out = prepare_out(m);
  write_distance_matrix_csv(out / "distance_matrix.csv", dm, hash);
  write_text_file(out / "dendrogram.json", dendrogram_to_json(dendro, hash).dump(2) + "\n");
  write_text_file(out / "clustering.json", clustering_to_json(selected, data.ids, hash).dump(2) + "\n");
  write_silhouette_csv(out / "silhouette.csv", table, hash);
  write_run_meta(out, m, Json{{"k", selected.k}, {"silhouette", selected.silhouette}});
  std::cout << "cluster: " << data.dists.size() << " scenarios -> k=" << selected.k
            << " (silhouette " << format_double(selected.silhouette) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// barycenter

int run_barycenter(const Json& m) {
  ScenarioData data = load_scenarios(m.at("in").get<std::string>());
  Json cj = Json::parse(read_text_file(m.at("clustering").get<std::string>()));
  const Json& labels = cj.at("labels");
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < data.ids.size(); ++i) {
    if (!labels.contains(data.ids[i]))
      throw ValidationError("scenario missing from clustering: " + data.ids[i]);
    groups[labels.at(data.ids[i]).get<int>()].push_back(static_cast<int>(i));
  }

  const bool normalize = m.at("normalize").get<bool>();
  NormalizationParams norm = fit_normalization(data.dists);
  BarycenterConfig bc = bary_from_manifest(m);
  const int grid = m.at("grid").get<int>();
  const std::string hash = manifest_hash(m);
  const fs::path out = prepare_out(m);

  std::vector<int> cluster_ids;
  for (const auto& [label, members] : groups) {
    cluster_ids.push_back(label);
    EmpiricalDistribution bary = data.dists[members.front()];
    if (members.size() == 1) {
      std::cerr << "barycenter: cluster " << label << " has a single member; passing it through\n";
    } else {
      std::vector<EmpiricalDistribution> group;
      group.reserve(members.size());
      for (int idx : members) group.push_back(normalize ? norm.apply(data.dists[idx]) : data.dists[idx]);
      Barycenter b = free_support_barycenter(group, bc);
      bary = normalize ? norm.invert(b.distribution) : b.distribution;
    }
    const std::string tag = "c" + std::to_string(label);
    write_barycenter_csv(out / ("barycenter_" + tag + ".csv"), bary, data.columns, hash);
    for (int j = 0; j < bary.dim(); ++j) {
      DensityGrid g = kde_1d(bary.support().col(j), bary.weights(), grid);
      write_density_csv(out / ("density_" + tag + "_" + data.columns[j] + ".csv"), g, data.columns[j], hash);
    }
  }
  write_run_meta(out, m, Json{{"clusters", cluster_ids}});
  std::cout << "barycenter: " << cluster_ids.size() << " clusters -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// monitor

std::string state_id(const StateVector& s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%03d_%03d_%03d_%03d", s.queues[0], s.queues[1], s.queues[2], s.queues[3]);
  return buf;
}

const std::vector<std::string>& state_columns() {
  static const std::vector<std::string> cols = {"regular_initial", "premium_initial", "regular_technical",
                                                "premium_technical"};
  return cols;
}

int run_monitor_build(const Json& m) {
  CallCenterConfig cfg = sim_from_json(m.at("sim"));
  Staffing staffing = staffing_from_json(m.at("staffing"));
  const std::uint64_t seed = m.at("seed").get<std::uint64_t>();
  const int threads = m.at("threads").get<int>();

  auto records = collect_states(cfg, staffing, m.at("days").get<int>(), seed, threads);
  auto scenarios = build_state_scenarios(records, m.at("min_count").get<int>());

  // Cap the per-state sample count so pairwise transport stays tractable.
  const int max_obs = m.at("max_obs").get<int>();
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    auto& obs = scenarios[s].observations;
    if (max_obs > 0 && static_cast<int>(obs.size()) > max_obs) {
      SubstreamRng rng({seed, 0x73756273616d70ULL, s});
      for (int i = 0; i < max_obs; ++i) {
        int j = i + static_cast<int>(rng.next_u64() % (obs.size() - i));
        std::swap(obs[i], obs[j]);
      }
      obs.resize(max_obs);
    }
  }

  std::vector<std::string> ids;
  std::vector<EmpiricalDistribution> dists;
  for (const auto& sc : scenarios) {
    ids.push_back(state_id(sc.state));
    dists.push_back(sc.distribution());
  }
  if (dists.size() < 3) throw ValidationError("monitor build needs at least 3 qualifying states; simulate more days");

  SinkhornConfig sk = sinkhorn_from_manifest(m);
  DistanceMatrix dm = pairwise_distances(dists, sk, metric_from_name(m.at("metric").get<std::string>()), true,
                                         threads, &ids);
  Dendrogram dendro = agglomerate(dm);
  auto table = silhouette_by_level(dendro, dm);
  Clustering selected = select_clustering(dendro, dm);

  // Normalized per-cluster barycenters; ranking = ascending mean churn on the
  // raw scale (churn is the last KPI).
  NormalizationParams norm = fit_normalization(dists);
  BarycenterConfig bc = bary_from_manifest(m);
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < dists.size(); ++i) groups[selected.labels[i]].push_back(static_cast<int>(i));
  std::map<int, EmpiricalDistribution> barys;
  std::vector<std::pair<double, int>> churn_rank;
  for (const auto& [label, members] : groups) {
    EmpiricalDistribution bary = norm.apply(dists[members.front()]);
    if (members.size() > 1) {
      std::vector<EmpiricalDistribution> group;
      for (int idx : members) group.push_back(norm.apply(dists[idx]));
      bary = free_support_barycenter(group, bc).distribution;
    }
    EmpiricalDistribution raw = norm.invert(bary);
    churn_rank.emplace_back(raw.mean()(2), label);
    barys.emplace(label, std::move(raw));
  }
  std::sort(churn_rank.begin(), churn_rank.end());

  LabeledStateLibrary lib;
  for (std::size_t i = 0; i < scenarios.size(); ++i)
    lib.entries.push_back({scenarios[i].state, selected.labels[i]});
  std::vector<double> ranking_churn;
  for (std::size_t r = 0; r < churn_rank.size(); ++r) {
    lib.ranking.push_back(churn_rank[r].second);
    lib.ranking_names.push_back("rank" + std::to_string(r + 1));
    ranking_churn.push_back(churn_rank[r].first);
  }
  lib.validate();

  const std::string hash = manifest_hash(m);
  const fs::path out = prepare_out(m);
  Json lj = library_to_json(lib, hash);
  lj["ranking_mean_churn"] = ranking_churn;
  lj["k"] = selected.k;
  write_text_file(out / "library.json", lj.dump(2) + "\n");

  std::vector<std::string> state_cols = state_columns();
  state_cols.push_back("count");
  state_cols.push_back("cluster");
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    std::vector<std::string> row;
    for (int q : scenarios[i].state.queues) row.push_back(std::to_string(q));
    row.push_back(std::to_string(scenarios[i].count()));
    row.push_back(std::to_string(selected.labels[i]));
    rows.push_back(row);
  }
  write_csv(out / "states.csv", state_cols, rows, {{"manifest", hash}});
  write_silhouette_csv(out / "silhouette.csv", table, hash);
  std::vector<std::string> kpi_cols(state_kpi_names().begin(), state_kpi_names().end());
  for (const auto& [label, bary] : barys)
    write_barycenter_csv(out / ("barycenter_c" + std::to_string(label) + ".csv"), bary, kpi_cols, hash);
  write_run_meta(out, m, Json{{"k", selected.k}, {"states", static_cast<int>(scenarios.size())}});
  std::cout << "monitor build: " << scenarios.size() << " states, k=" << selected.k << " -> "
            << out.string() << "\n";
  return 0;
}

int run_monitor_classify(const Json& m) {
  LabeledStateLibrary lib = library_from_json(Json::parse(read_text_file(m.at("library").get<std::string>())));
  const int k = m.at("k").get<int>();
  const std::string hash = manifest_hash(m);
  const fs::path out = prepare_out(m);

  if (!m.at("state").empty()) {
    auto q = m.at("state").get<std::vector<int>>();
    if (q.size() != 4) throw ValidationError("--state needs 4 queue lengths");
    StateVector state{{q[0], q[1], q[2], q[3]}};
    Verdict verdict = knn_classify(state, lib, k);
    Json cj{{"manifest", hash}, {"state", q}, {"k", k}, {"verdict", verdict.describe(lib)},
            {"clusters", verdict.clusters}};
    write_text_file(out / "classification.json", cj.dump(2) + "\n");
    write_run_meta(out, m);
    std::cout << verdict.describe(lib) << "\n";
    return 0;
  }

  std::vector<std::pair<double, StateVector>> trace;
  const double close = m.at("close_minutes").get<double>();
  if (!m.at("trace").get<std::string>().empty()) {
    CsvContent csv = read_csv(m.at("trace").get<std::string>());
    std::vector<std::string> expect = {"minutes"};
    for (const auto& c : state_columns()) expect.push_back(c);
    if (csv.columns != expect) throw ValidationError("trace csv must have columns minutes," + [] {
      std::string s;
      for (const auto& c : state_columns()) s += (s.empty() ? "" : ",") + c;
      return s;
    }());
    for (const auto& row : csv.rows) {
      StateVector sv{{static_cast<int>(parse_double(row[1])), static_cast<int>(parse_double(row[2])),
                      static_cast<int>(parse_double(row[3])), static_cast<int>(parse_double(row[4]))}};
      trace.emplace_back(parse_double(row[0]), sv);
    }
  } else {
    CallCenterConfig cfg = sim_from_json(m.at("sim"));
    Staffing staffing = staffing_from_json(m.at("staffing"));
    const double interval = m.at("interval").get<double>();
    if (!(interval > 0)) throw ValidationError("interval must be > 0");
    std::vector<double> times;
    for (double t = 0; t <= cfg.open_minutes(); t += interval) times.push_back(t);
    RngPolicy policy{RngMode::Crn, m.at("seed").get<std::uint64_t>(), m.at("day").get<std::uint64_t>(), 0};
    DayResult day = simulate_day_detailed(cfg, staffing, generate_population(cfg, policy), nullptr, &times);
    trace = day.trace;
  }

  auto timeline = monitor_timeline(trace, lib, k, close);
  write_timeline_csv(out / "timeline.csv", timeline, lib, hash);
  write_run_meta(out, m, Json{{"points", static_cast<int>(timeline.size())}});
  std::cout << "monitor classify: " << timeline.size() << " timeline points -> " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// crn

int run_crn(const Json& m) {
  CallCenterConfig cfg = sim_from_json(m.at("sim"));
  SinkhornConfig sk = sinkhorn_from_manifest(m);
  const Metric metric = metric_from_name(m.at("metric").get<std::string>());
  const std::uint64_t seed = m.at("seed").get<std::uint64_t>();
  const int threads = m.at("threads").get<int>();
  const std::string hash = manifest_hash(m);
  const fs::path out = prepare_out(m);

  if (!m.at("skip_variance").get<bool>()) {
    CrnStudyReport r = crn_distance_study(cfg, staffing_from_json(m.at("a")), staffing_from_json(m.at("b")),
                                          m.at("reps").get<int>(), m.at("macroreps").get<int>(), sk, seed,
                                          metric, threads);
    Json rj{{"manifest", hash},
            {"variance_crn", r.variance_crn},
            {"variance_independent", r.variance_independent},
            {"f_statistic", r.f_statistic},
            {"p_value", r.p_value},
            {"distances_crn", r.distances_crn},
            {"distances_independent", r.distances_independent}};
    write_text_file(out / "crn_report.json", rj.dump(2) + "\n");
    std::cout << "crn variance: independent=" << format_double(r.variance_independent)
              << " crn=" << format_double(r.variance_crn) << " F=" << format_double(r.f_statistic)
              << " p=" << format_double(r.p_value) << "\n";
  }

  if (!m.at("skip_ari").get<bool>()) {
    const Json& a = m.at("ari");
    std::vector<Staffing> universe = enumerate_fixed_total(a.at("total").get<int>());
    std::vector<Staffing> staffings =
        uniform_subset(universe, a.at("scenarios").get<int>(), m.at("subset_seed").get<std::uint64_t>());
    AriStudyReport r = ari_study(cfg, staffings, a.at("truth_reps").get<int>(), a.at("small_reps").get<int>(),
                                 a.at("macroreps").get<int>(), sk, seed, metric, threads);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < r.ari_crn.size(); ++i)
      rows.push_back({std::to_string(i), "crn", format_double(r.ari_crn[i])});
    for (std::size_t i = 0; i < r.ari_independent.size(); ++i)
      rows.push_back({std::to_string(i), "independent", format_double(r.ari_independent[i])});
    write_csv(out / "ari_study.csv", {"macrorep", "mode", "ari"}, rows,
              {{"manifest", hash},
               {"mean_crn", format_double(r.mean_crn)},
               {"mean_independent", format_double(r.mean_independent)},
               {"sd_crn", format_double(r.sd_crn)},
               {"sd_independent", format_double(r.sd_independent)},
               {"truth_k", std::to_string(r.truth_k)}});
    std::cout << "crn ari: independent=" << format_double(r.mean_independent)
              << " (sd " << format_double(r.sd_independent) << ") crn=" << format_double(r.mean_crn)
              << " (sd " << format_double(r.sd_crn) << ")\n";
  }

  write_run_meta(out, m);
  return 0;
}

// ---------------------------------------------------------------------------
// bench

EmpiricalDistribution random_distribution(std::uint64_t seed, std::uint64_t tag, int size, int dim) {
  SubstreamRng rng({seed, tag, static_cast<std::uint64_t>(size), static_cast<std::uint64_t>(dim)});
  Eigen::MatrixXd pts(size, dim);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < dim; ++j) pts(i, j) = rng.next_unit();
  return EmpiricalDistribution::from_samples(pts);
}

double time_seconds(const std::function<void()>& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count();
}

// Lloyd iterations with free-support barycenter centroids; the baseline the
// clustering bench compares against. Assignment ties go to the lower index,
// empty clusters keep their previous centroid.
void kmeans_baseline(const std::vector<EmpiricalDistribution>& dists, int k, const SinkhornConfig& sk,
                     Metric metric, const BarycenterConfig& bc, int max_iterations) {
  const int n = static_cast<int>(dists.size());
  std::vector<EmpiricalDistribution> centers;
  for (int j = 0; j < k; ++j) centers.push_back(dists[static_cast<std::size_t>(j) * n / k]);
  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        double d = sinkhorn(dists[i], centers[j], metric, sk).distance;
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    if (!changed) break;
    for (int j = 0; j < k; ++j) {
      std::vector<EmpiricalDistribution> members;
      for (int i = 0; i < n; ++i)
        if (assign[i] == j) members.push_back(dists[i]);
      if (members.size() > 1) centers[j] = free_support_barycenter(members, bc).distribution;
      else if (members.size() == 1) centers[j] = members.front();
    }
  }
}

int run_bench(const Json& m) {
  const std::string suite = m.at("suite").get<std::string>();
  const std::uint64_t seed = m.at("seed").get<std::uint64_t>();
  const int dim = m.at("dim").get<int>();
  SinkhornConfig sk = sinkhorn_from_manifest(m);
  const std::string hash = manifest_hash(m);
  const fs::path out = prepare_out(m);
  std::vector<std::vector<std::string>> rows;

  if (suite == "distance-scaling") {
    const int reps = m.at("reps").get<int>();
    for (int size : m.at("sizes").get<std::vector<int>>()) {
      for (int rep = 0; rep < reps; ++rep) {
        EmpiricalDistribution a = random_distribution(seed, 2 * rep, size, dim);
        EmpiricalDistribution b = random_distribution(seed, 2 * rep + 1, size, dim);
        CostMatrix cost = cost_matrix(a, b, Metric::Euclidean);
        double t_exact = time_seconds([&] { exact_wasserstein(a, b, cost); });
        double t_sink = time_seconds([&] { sinkhorn(a.weights(), b.weights(), cost.entries, sk); });
        rows.push_back({std::to_string(size), std::to_string(rep), "exact", format_double(t_exact)});
        rows.push_back({std::to_string(size), std::to_string(rep), "sinkhorn", format_double(t_sink)});
      }
      std::cout << "bench distance-scaling: size " << size << " done\n";
    }
    write_csv(out / "timings.csv", {"size", "rep", "method", "seconds"}, rows,
              {{"manifest", hash}, {"suite", suite}});
  } else if (suite == "clustering-vs-kmeans") {
    BarycenterConfig bc = bary_from_manifest(m);
    const int k_max = m.at("k_max").get<int>();
    const int lloyd = m.at("lloyd_iterations").get<int>();
    auto run_point = [&](const std::string& axis, int n, int support) {
      std::vector<EmpiricalDistribution> dists;
      for (int i = 0; i < n; ++i) dists.push_back(random_distribution(seed, 100 + i, support, dim));
      BarycenterConfig bca = bc;
      bca.support_size = support;
      double t_agg = time_seconds([&] {
        DistanceMatrix dm = pairwise_distances(dists, sk, Metric::Euclidean, false, 1);
        select_clustering(agglomerate(dm), dm);
      });
      double t_km = time_seconds([&] {
        for (int k = 2; k <= std::min(k_max, n - 1); ++k)
          kmeans_baseline(dists, k, sk, Metric::Euclidean, bca, lloyd);
      });
      int value = axis == "n" ? n : support;
      rows.push_back({axis, std::to_string(value), "agglomerative", format_double(t_agg)});
      rows.push_back({axis, std::to_string(value), "kmeans", format_double(t_km)});
      std::cout << "bench clustering-vs-kmeans: " << axis << "=" << value << " agglomerative="
                << format_double(t_agg) << "s kmeans=" << format_double(t_km) << "s\n";
    };
    for (int n : m.at("n_grid").get<std::vector<int>>()) run_point("n", n, m.at("support_fixed").get<int>());
    for (int s : m.at("support_grid").get<std::vector<int>>()) run_point("support", m.at("n_fixed").get<int>(), s);
    write_csv(out / "timings.csv", {"axis", "value", "method", "seconds"}, rows,
              {{"manifest", hash}, {"suite", suite}});
  } else {
    throw ValidationError("unknown bench suite: " + suite);
  }
  write_run_meta(out, m);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustering of multivariate simulation output distributions by regularized transport distance"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string out_dir = "out";
  if (const char* env = std::getenv("WCLUSTER_OUT")) out_dir = env;
  int threads = default_thread_count();
  bool error_json = false;
  std::string manifest_path;
  app.add_option("--out", out_dir, "Output directory (env WCLUSTER_OUT)");
  app.add_option("--threads", threads, "Worker threads");
  app.add_flag("--error-json", error_json, "Emit machine-readable errors on stderr");
  app.add_option("--manifest", manifest_path, "Manifest JSON file; its fields override flags");

  Json manifest;
  int rc = 0;
  auto dispatch = [&](const Json& defaults, int (*runner)(const Json&)) {
    manifest = defaults;
    manifest["out"] = out_dir;
    manifest["threads"] = threads;
    merge_manifest_file(manifest, manifest_path);
    rc = runner(manifest);
  };

  // simulate
  auto* c_sim = app.add_subcommand("simulate", "Simulate staffing scenarios, write per-scenario KPI samples");
  c_sim->fallthrough();
  std::string universe = "fixed-total", mode = "crn";
  int total = 49, select = 100, reps = 40;
  std::uint64_t seed = 1;
  std::int64_t subset_seed = -1;
  int budget_min = 50, budget_max = 55;
  std::string budget_cost = "4,1,1", budget_min_count = "1,1,1", budget_max_count = "-1,-1,-1";
  std::vector<std::string> staffing_args;
  c_sim->add_option("--universe", universe, "fixed-total | budget | explicit");
  c_sim->add_option("--total", total, "Operator total for fixed-total");
  c_sim->add_option("--budget-min", budget_min);
  c_sim->add_option("--budget-max", budget_max);
  c_sim->add_option("--budget-cost", budget_cost, "Cost per premium,basic,technical operator");
  c_sim->add_option("--budget-min-count", budget_min_count);
  c_sim->add_option("--budget-max-count", budget_max_count, "-1 = unbounded");
  c_sim->add_option("--staffing", staffing_args, "premium,basic,technical (repeatable; explicit universe)");
  c_sim->add_option("--select", select, "Uniform subset size (0 = all)");
  c_sim->add_option("--reps", reps, "Replications per scenario");
  c_sim->add_option("--mode", mode, "crn | independent");
  c_sim->add_option("--seed", seed);
  c_sim->add_option("--subset-seed", subset_seed, "Seed for subset selection (default: --seed)");
  c_sim->callback([&] {
    Json staffings = Json::array();
    for (const auto& s : staffing_args) {
      auto v = parse_int_list(s, "--staffing");
      if (v.size() != 3) throw ValidationError("--staffing needs premium,basic,technical");
      staffings.push_back(v);
    }
    dispatch(Json{{"command", "simulate"},
                  {"universe", universe},
                  {"total", total},
                  {"budget", Json{{"cost", parse_int_list(budget_cost, "--budget-cost")},
                                  {"min", budget_min},
                                  {"max", budget_max},
                                  {"min_count", parse_int_list(budget_min_count, "--budget-min-count")},
                                  {"max_count", parse_int_list(budget_max_count, "--budget-max-count")}}},
                  {"staffings", staffings},
                  {"select", select},
                  {"reps", reps},
                  {"mode", mode},
                  {"seed", seed},
                  {"subset_seed", subset_seed < 0 ? seed : static_cast<std::uint64_t>(subset_seed)},
                  {"sim", sim_to_json(CallCenterConfig{})}},
             run_simulate);
  });

  // cluster
  auto* c_clu = app.add_subcommand("cluster", "Cluster scenario distributions from a simulate output directory");
  c_clu->fallthrough();
  std::string in_dir, metric = "euclidean", domain = "auto";
  double lambda = 0.01, tolerance = 1e-7;
  int max_iterations = 10000;
  bool normalize = true;
  std::uint64_t cl_seed = 1;
  c_clu->add_option("--in", in_dir, "Directory with scenario_*.csv")->required();
  c_clu->add_option("--lambda", lambda, "Entropic regularization strength");
  c_clu->add_option("--tolerance", tolerance);
  c_clu->add_option("--max-iterations", max_iterations);
  c_clu->add_option("--domain", domain, "auto | scaling | log");
  c_clu->add_option("--metric", metric, "euclidean | squared_euclidean");
  c_clu->add_flag("--normalize,!--no-normalize", normalize, "Pooled z-score before transport");
  c_clu->callback([&] {
    dispatch(Json{{"command", "cluster"},
                  {"in", in_dir},
                  {"lambda", lambda},
                  {"tolerance", tolerance},
                  {"max_iterations", max_iterations},
                  {"domain", domain},
                  {"metric", metric},
                  {"normalize", normalize}},
             run_cluster);
  });

  // barycenter
  auto* c_bar = app.add_subcommand("barycenter", "Summarize each cluster with a free-support barycenter");
  c_bar->fallthrough();
  std::string clustering_path;
  int support_size = 0, max_outer = 50, grid = 512;
  double bar_lambda = 0.05, theta = 1.0, t0 = 1.0, outer_tol = 1e-5;
  std::string bar_metric = "squared_euclidean";
  c_bar->add_option("--clustering", clustering_path, "clustering.json from the cluster step")->required();
  c_bar->add_option("--in", in_dir, "Directory with scenario_*.csv")->required();
  c_bar->add_option("--support-size", support_size, "0 = median member size");
  c_bar->add_option("--lambda", bar_lambda);
  c_bar->add_option("--theta", theta);
  c_bar->add_option("--t0", t0);
  c_bar->add_option("--outer-tolerance", outer_tol);
  c_bar->add_option("--max-outer", max_outer);
  c_bar->add_option("--metric", bar_metric);
  c_bar->add_option("--grid", grid, "Density grid size");
  c_bar->add_option("--seed", cl_seed);
  c_bar->add_flag("--normalize,!--no-normalize", normalize, "Pooled z-score around the transport solve");
  c_bar->callback([&] {
    Json b = bary_defaults(support_size, bar_lambda, max_outer);
    b["theta"] = theta;
    b["t0"] = t0;
    b["outer_tolerance"] = outer_tol;
    b["metric"] = bar_metric;
    dispatch(Json{{"command", "barycenter"},
                  {"clustering", clustering_path},
                  {"in", in_dir},
                  {"bary", b},
                  {"grid", grid},
                  {"seed", cl_seed},
                  {"normalize", normalize}},
             run_barycenter);
  });

  // monitor
  auto* c_mon = app.add_subcommand("monitor", "State-based performance monitoring");
  c_mon->fallthrough();
  c_mon->require_subcommand(1);
  auto* c_mb = c_mon->add_subcommand("build", "Build a labeled state library from long-run simulation");
  c_mb->fallthrough();
  std::string mb_staffing = "9,22,8";
  int days = 5000, min_count = 10, max_obs = 100;
  double mb_lambda = 0.1;
  std::uint64_t mb_seed = 1;
  int mb_max_outer = 30;
  c_mb->add_option("--staffing", mb_staffing, "premium,basic,technical");
  c_mb->add_option("--days", days);
  c_mb->add_option("--min-count", min_count, "Observations required to keep a state");
  c_mb->add_option("--max-obs", max_obs, "Subsample cap per state (0 = keep all)");
  c_mb->add_option("--lambda", mb_lambda);
  c_mb->add_option("--seed", mb_seed);
  c_mb->callback([&] {
    dispatch(Json{{"command", "monitor-build"},
                  {"staffing", parse_int_list(mb_staffing, "--staffing")},
                  {"days", days},
                  {"min_count", min_count},
                  {"max_obs", max_obs},
                  {"lambda", mb_lambda},
                  {"tolerance", 1e-7},
                  {"max_iterations", 10000},
                  {"domain", "scaling"},
                  {"metric", "euclidean"},
                  {"seed", mb_seed},
                  {"bary", bary_defaults(0, mb_lambda, mb_max_outer)},
                  {"sim", sim_to_json(CallCenterConfig{})}},
             run_monitor_build);
  });

  auto* c_mc = c_mon->add_subcommand("classify", "Classify states against a library");
  c_mc->fallthrough();
  std::string library_path, state_arg, trace_path, mc_staffing = "9,22,8";
  int knn_k = 2;
  double close_minutes = 480, interval = 60;
  std::uint64_t mc_seed = 1, mc_day = 0;
  c_mc->add_option("--library", library_path, "library.json from monitor build")->required();
  c_mc->add_option("--state", state_arg, "Single state: four queue lengths");
  c_mc->add_option("--trace", trace_path, "CSV trace (minutes + four queue columns)");
  c_mc->add_option("--staffing", mc_staffing, "Simulated-day staffing (premium,basic,technical)");
  c_mc->add_option("--seed", mc_seed);
  c_mc->add_option("--day", mc_day, "Replication index of the simulated day");
  c_mc->add_option("--interval", interval, "Snapshot interval in minutes for the simulated day");
  c_mc->add_option("--k", knn_k, "Nearest neighbours consulted");
  c_mc->add_option("--close", close_minutes, "Minutes after which closing-soon is flagged");
  c_mc->callback([&] {
    Json state = Json::array();
    if (!state_arg.empty()) state = parse_int_list(state_arg, "--state");
    dispatch(Json{{"command", "monitor-classify"},
                  {"library", library_path},
                  {"state", state},
                  {"trace", trace_path},
                  {"staffing", parse_int_list(mc_staffing, "--staffing")},
                  {"seed", mc_seed},
                  {"day", mc_day},
                  {"interval", interval},
                  {"k", knn_k},
                  {"close_minutes", close_minutes},
                  {"sim", sim_to_json(CallCenterConfig{})}},
             run_monitor_classify);
  });

  // crn
  auto* c_crn = app.add_subcommand("crn", "Common-random-numbers studies: distance variance and ARI stability");
  c_crn->fallthrough();
  std::string crn_a = "9,23,27", crn_b = "7,28,14", crn_metric = "euclidean";
  int crn_reps = 40, crn_macroreps = 30;
  double crn_lambda = 0.05;
  std::uint64_t crn_seed = 1;
  std::int64_t crn_subset_seed = -1;
  bool skip_variance = false, skip_ari = false;
  int ari_scenarios = 20, ari_total = 49, ari_truth = 500, ari_small = 15, ari_macroreps = 30;
  c_crn->add_option("--a", crn_a, "First staffing (premium,basic,technical)");
  c_crn->add_option("--b", crn_b, "Second staffing");
  c_crn->add_option("--reps", crn_reps, "Replications per scenario per macroreplication");
  c_crn->add_option("--macroreps", crn_macroreps);
  c_crn->add_option("--lambda", crn_lambda);
  c_crn->add_option("--metric", crn_metric);
  c_crn->add_option("--seed", crn_seed);
  c_crn->add_option("--subset-seed", crn_subset_seed, "Seed for the ARI scenario subset (default: --seed)");
  c_crn->add_flag("--skip-variance", skip_variance);
  c_crn->add_flag("--skip-ari", skip_ari);
  c_crn->add_option("--ari-scenarios", ari_scenarios);
  c_crn->add_option("--ari-total", ari_total);
  c_crn->add_option("--ari-truth-reps", ari_truth);
  c_crn->add_option("--ari-small-reps", ari_small);
  c_crn->add_option("--ari-macroreps", ari_macroreps);
  c_crn->callback([&] {
    dispatch(Json{{"command", "crn"},
                  {"a", parse_int_list(crn_a, "--a")},
                  {"b", parse_int_list(crn_b, "--b")},
                  {"reps", crn_reps},
                  {"macroreps", crn_macroreps},
                  {"lambda", crn_lambda},
                  {"tolerance", 1e-7},
                  {"max_iterations", 10000},
                  {"domain", "auto"},
                  {"metric", crn_metric},
                  {"seed", crn_seed},
                  {"subset_seed", crn_subset_seed < 0 ? crn_seed : static_cast<std::uint64_t>(crn_subset_seed)},
                  {"skip_variance", skip_variance},
                  {"skip_ari", skip_ari},
                  {"ari", Json{{"scenarios", ari_scenarios},
                               {"total", ari_total},
                               {"truth_reps", ari_truth},
                               {"small_reps", ari_small},
                               {"macroreps", ari_macroreps}}},
                  {"sim", sim_to_json(CallCenterConfig{})}},
             run_crn);
  });

  // bench
  auto* c_ben = app.add_subcommand("bench", "Timing suites; emits raw measurements");
  c_ben->fallthrough();
  std::string suite, sizes = "50,100,200,400,800", n_grid = "20,40,60,80,100", support_grid = "10,20,40,80";
  int bench_reps = 3, bench_dim = 5, n_fixed = 20, support_fixed = 20, k_max = 10, lloyd_iterations = 5;
  double bench_lambda = 0.2;
  std::uint64_t bench_seed = 1;
  c_ben->add_option("--suite", suite, "distance-scaling | clustering-vs-kmeans")->required();
  c_ben->add_option("--sizes", sizes, "Support sizes for distance-scaling");
  c_ben->add_option("--reps", bench_reps);
  c_ben->add_option("--dim", bench_dim);
  c_ben->add_option("--lambda", bench_lambda);
  c_ben->add_option("--seed", bench_seed);
  c_ben->add_option("--n-grid", n_grid, "Distribution counts for clustering-vs-kmeans");
  c_ben->add_option("--support-grid", support_grid);
  c_ben->add_option("--n-fixed", n_fixed);
  c_ben->add_option("--support-fixed", support_fixed);
  c_ben->add_option("--k-max", k_max);
  c_ben->add_option("--lloyd-iterations", lloyd_iterations);
  c_ben->callback([&] {
    Json b = bary_defaults(0, bench_lambda, 10);
    b["outer_tolerance"] = 1e-3;
    b["sinkhorn_tolerance"] = 1e-6;
    b["sinkhorn_max_iterations"] = 2000;
    dispatch(Json{{"command", "bench"},
                  {"suite", suite},
                  {"sizes", parse_int_list(sizes, "--sizes")},
                  {"reps", bench_reps},
                  {"dim", bench_dim},
                  {"lambda", bench_lambda},
                  {"tolerance", 1e-7},
                  {"max_iterations", 10000},
                  {"domain", "auto"},
                  {"seed", bench_seed},
                  {"n_grid", parse_int_list(n_grid, "--n-grid")},
                  {"support_grid", parse_int_list(support_grid, "--support-grid")},
                  {"n_fixed", n_fixed},
                  {"support_fixed", support_fixed},
                  {"k_max", k_max},
                  {"lloyd_iterations", lloyd_iterations},
                  {"bary", b}},
             run_bench);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ValidationError& e) {
    if (error_json)
      std::cerr << Json{{"error", "validation"}, {"message", e.what()}}.dump() << "\n";
    else
      std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    if (error_json)
      std::cerr << Json{{"error", "numerical"}, {"message", e.what()}}.dump() << "\n";
    else
      std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    if (error_json)
      std::cerr << Json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    else
      std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
