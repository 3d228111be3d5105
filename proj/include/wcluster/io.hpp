#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wcluster/barycenter.hpp"
#include "wcluster/clustering.hpp"
#include "wcluster/common.hpp"
#include "wcluster/distribution.hpp"
#include "wcluster/kde.hpp"
#include "wcluster/monitoring.hpp"

namespace wcluster {

using Json = nlohmann::json;

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw ValidationError("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The canonical manifest identifies a run up to its I/O placement: input and
// output paths and the worker count never affect artifact bytes.
inline Json canonical_manifest(const Json& manifest) {
  Json canon = manifest;
  for (const char* key : {"out", "in", "threads", "clustering", "library", "trace"}) canon.erase(key);
  return canon;
}

inline std::string manifest_hash(const Json& manifest) { return to_hex(fnv1a64(canonical_manifest(manifest).dump())); }

struct CsvContent {
  std::map<std::string, std::string> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  Eigen::MatrixXd numeric() const {
    Eigen::MatrixXd m(rows.size(), columns.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != columns.size()) throw ValidationError("ragged csv row");
      for (std::size_t j = 0; j < columns.size(); ++j) m(i, j) = parse_double(rows[i][j]);
    }
    return m;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvContent read_csv(const std::filesystem::path& path) {
  CsvContent content;
  std::istringstream in(read_text_file(path));
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      while (!body.empty() && body.front() == ' ') body.erase(body.begin());
      std::size_t at = body.find('=');
      if (at != std::string::npos) content.meta[body.substr(0, at)] = body.substr(at + 1);
      continue;
    }
    if (!header_seen) {
      content.columns = split_csv_line(line);
      header_seen = true;
    } else {
      content.rows.push_back(split_csv_line(line));
    }
  }
  if (!header_seen) throw ValidationError("csv has no header: " + path.string());
  return content;
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
                      const std::vector<std::vector<std::string>>& rows,
                      const std::map<std::string, std::string>& meta) {
  std::string out;
  for (const auto& [k, v] : meta) out += "# " + k + "=" + v + "\n";
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (j) out += ',';
    out += columns[j];
  }
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out += ',';
      out += row[j];
    }
    out += '\n';
  }
  write_text_file(path, out);
}

inline void write_numeric_csv(const std::filesystem::path& path, const std::vector<std::string>& columns,
                              const Eigen::MatrixXd& values, const std::map<std::string, std::string>& meta) {
  std::vector<std::vector<std::string>> rows(values.rows());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    rows[i].reserve(values.cols());
    for (Eigen::Index j = 0; j < values.cols(); ++j) rows[i].push_back(format_double(values(i, j)));
  }
  write_csv(path, columns, rows, meta);
}

inline void write_distance_matrix_csv(const std::filesystem::path& path, const DistanceMatrix& dm,
                                      const std::string& hash) {
  std::vector<std::string> columns;
  columns.push_back("scenario");
  for (const auto& id : dm.ids) columns.push_back(id);
  std::vector<std::vector<std::string>> rows(dm.size());
  for (int i = 0; i < dm.size(); ++i) {
    rows[i].push_back(dm.ids[i]);
    for (int j = 0; j < dm.size(); ++j) rows[i].push_back(format_double(dm.entries(i, j)));
  }
  write_csv(path, columns, rows, {{"manifest", hash}});
}

inline DistanceMatrix read_distance_matrix_csv(const std::filesystem::path& path) {
  CsvContent content = read_csv(path);
  if (content.columns.size() < 2 || content.columns[0] != "scenario")
    throw ValidationError("not a distance matrix csv: " + path.string());
  const int n = static_cast<int>(content.rows.size());
  if (static_cast<int>(content.columns.size()) != n + 1)
    throw ValidationError("distance matrix csv must be square");
  DistanceMatrix dm;
  dm.ids.assign(content.columns.begin() + 1, content.columns.end());
  dm.entries.resize(n, n);
  for (int i = 0; i < n; ++i) {
    if (content.rows[i][0] != dm.ids[i]) throw ValidationError("distance matrix row/column order mismatch");
    for (int j = 0; j < n; ++j) dm.entries(i, j) = parse_double(content.rows[i][j + 1]);
  }
  dm.validate();
  return dm;
}

inline Json dendrogram_to_json(const Dendrogram& dendro, const std::string& hash) {
  Json j;
  j["manifest"] = hash;
  j["leaf_ids"] = dendro.leaf_ids;
  Json merges = Json::array();
  for (const auto& m : dendro.merges)
    merges.push_back({{"left", m.left}, {"right", m.right}, {"height", m.height}, {"new_id", m.new_id}});
  j["merges"] = merges;
  return j;
}

inline Dendrogram dendrogram_from_json(const Json& j) {
  Dendrogram d;
  d.leaf_ids = j.at("leaf_ids").get<std::vector<std::string>>();
  for (const auto& m : j.at("merges"))
    d.merges.push_back(Merge{m.at("left").get<int>(), m.at("right").get<int>(), m.at("height").get<double>(),
                             m.at("new_id").get<int>()});
  return d;
}

inline Json clustering_to_json(const Clustering& clustering, const std::vector<std::string>& ids,
                               const std::string& hash) {
  if (ids.size() != clustering.labels.size()) throw ValidationError("clustering id count mismatch");
  Json labels;
  for (std::size_t i = 0; i < ids.size(); ++i) labels[ids[i]] = clustering.labels[i];
  return Json{{"manifest", hash}, {"k", clustering.k}, {"silhouette", clustering.silhouette}, {"labels", labels}};
}

inline void write_silhouette_csv(const std::filesystem::path& path, const std::vector<std::pair<int, double>>& table,
                                 const std::string& hash) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(table.size());
  for (const auto& [k, s] : table) rows.push_back({std::to_string(k), format_double(s)});
  write_csv(path, {"k", "silhouette"}, rows, {{"manifest", hash}});
}

inline void write_barycenter_csv(const std::filesystem::path& path, const EmpiricalDistribution& dist,
                                 const std::vector<std::string>& coordinate_names, const std::string& hash) {
  if (static_cast<int>(coordinate_names.size()) != dist.dim())
    throw ValidationError("coordinate name count mismatch");
  std::vector<std::string> columns = coordinate_names;
  columns.push_back("weight");
  Eigen::MatrixXd values(dist.size(), dist.dim() + 1);
  values.leftCols(dist.dim()) = dist.support();
  values.col(dist.dim()) = dist.weights();
  write_numeric_csv(path, columns, values, {{"manifest", hash}});
}

inline EmpiricalDistribution read_barycenter_csv(const std::filesystem::path& path) {
  CsvContent content = read_csv(path);
  if (content.columns.empty() || content.columns.back() != "weight")
    throw ValidationError("not a barycenter csv: " + path.string());
  Eigen::MatrixXd values = content.numeric();
  return EmpiricalDistribution::from_points(values.leftCols(values.cols() - 1), values.col(values.cols() - 1));
}

inline void write_density_csv(const std::filesystem::path& path, const DensityGrid& grid, const std::string& kpi,
                              const std::string& hash) {
  Eigen::MatrixXd values(grid.x.size(), 2);
  values.col(0) = grid.x;
  values.col(1) = grid.density;
  write_numeric_csv(path, {"x", "density"}, values,
                    {{"manifest", hash}, {"kpi", kpi}, {"bandwidth", format_double(grid.bandwidth)}});
}

inline Json library_to_json(const LabeledStateLibrary& lib, const std::string& hash) {
  Json entries = Json::array();
  for (const auto& e : lib.entries)
    entries.push_back({{"state", e.state.queues}, {"cluster", e.cluster}});
  return Json{{"manifest", hash},
              {"entries", entries},
              {"ranking", lib.ranking},
              {"ranking_names", lib.ranking_names}};
}

inline LabeledStateLibrary library_from_json(const Json& j) {
  LabeledStateLibrary lib;
  for (const auto& e : j.at("entries")) {
    LabeledStateLibrary::Entry entry;
    auto queues = e.at("state").get<std::vector<int>>();
    if (queues.size() != 4) throw ValidationError("library state must have 4 queue lengths");
    for (int t = 0; t < 4; ++t) entry.state.queues[t] = queues[t];
    entry.cluster = e.at("cluster").get<int>();
    lib.entries.push_back(entry);
  }
  lib.ranking = j.at("ranking").get<std::vector<int>>();
  if (j.contains("ranking_names")) lib.ranking_names = j.at("ranking_names").get<std::vector<std::string>>();
  lib.validate();
  return lib;
}

inline void write_timeline_csv(const std::filesystem::path& path, const std::vector<TimelinePoint>& timeline,
                               const LabeledStateLibrary& lib, const std::string& hash) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(timeline.size());
  for (const auto& pt : timeline)
    rows.push_back({format_double(pt.minutes), pt.verdict.describe(lib), pt.closing_soon ? "1" : "0"});
  write_csv(path, {"minutes", "verdict", "closing_soon"}, rows, {{"manifest", hash}});
}

}  // namespace wcluster
