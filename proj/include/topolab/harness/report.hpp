#pragma once

#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topolab/agents.hpp"
#include "topolab/causal.hpp"
#include "topolab/error.hpp"
#include "topolab/harness/digest.hpp"

namespace topolab::harness {

inline constexpr const char* kToolName = "topolab";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSweepHeader = "direction,sparsity,tcte,accuracy,n_queries,seed";
inline constexpr const char* kBaselineHeader = "kind,sparsity,error_tcte,insight_tcte,accuracy,seed";

// Shortest round-trip decimal form; stable across runs and platforms.
inline std::string format_number(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::string sweep_csv(const std::vector<SweepReport>& reports) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& rep : reports)
    for (const auto& row : rep.rows)
      out += std::string(direction_label(rep.direction)) + "," + format_number(row.topology_sparsity) + "," +
             format_number(row.tcte) + "," + format_number(row.accuracy) + "," + std::to_string(row.n_queries) + "," +
             std::to_string(rep.seed) + "\n";
  return out;
}

struct BaselineTable {
  std::uint64_t seed = 0;
  std::vector<BaselineRow> rows;
};

inline std::string baselines_csv(const std::vector<BaselineTable>& tables) {
  std::string out = std::string(kBaselineHeader) + "\n";
  for (const auto& tab : tables)
    for (const auto& r : tab.rows)
      out += r.kind + "," + format_number(r.sparsity) + "," + format_number(r.error_tcte) + "," +
             format_number(r.insight_tcte) + "," + format_number(r.accuracy) + "," + std::to_string(tab.seed) + "\n";
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline double parse_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw InvalidArgument(where + ": bad number '" + s + "'");
  return v;
}

}  // namespace detail

// Reads a sweep CSV back into reports (one per direction and seed, in file order).
inline std::vector<SweepReport> parse_sweep_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || line != kSweepHeader)
    throw InvalidArgument(source + ": expected header '" + kSweepHeader + "'");
  std::vector<SweepReport> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 6) throw InvalidArgument(where + ": expected 6 columns");
    PropagationKind dir;
    if (cells[0] == "error")
      dir = PropagationKind::ErrorPropagation;
    else if (cells[0] == "insight")
      dir = PropagationKind::InsightPropagation;
    else
      throw InvalidArgument(where + ": unknown direction '" + cells[0] + "'");
    const auto seed = static_cast<std::uint64_t>(detail::parse_number(cells[5], where));
    if (out.empty() || out.back().direction != dir || out.back().seed != seed) out.push_back({dir, seed, {}});
    TcteRecord row;
    row.topology_sparsity = detail::parse_number(cells[1], where);
    row.tcte = detail::parse_number(cells[2], where);
    row.accuracy = detail::parse_number(cells[3], where);
    row.n_queries = static_cast<std::size_t>(detail::parse_number(cells[4], where));
    out.back().rows.push_back(row);
  }
  return out;
}

// Plain-text table: per sparsity, mean and spread across seeds.
inline std::string sweep_summary(const std::vector<SweepReport>& reports) {
  std::ostringstream out;
  std::map<std::pair<int, double>, std::vector<const TcteRecord*>> cells;
  for (const auto& rep : reports)
    for (const auto& row : rep.rows) cells[{static_cast<int>(rep.direction), row.topology_sparsity}].push_back(&row);
  int current = -1;
  char line[160];
  for (const auto& [key, rows] : cells) {
    if (key.first != current) {
      current = key.first;
      out << (current == 0 ? "error propagation" : "insight propagation") << " (" << rows.size() << " seeds)\n";
      std::snprintf(line, sizeof line, "  %-10s %-10s %-10s %-10s %-10s\n", "sparsity", "tcte", "tcte_min", "tcte_max",
                    "accuracy");
      out << line;
    }
    double t = 0.0, lo = 1.0, hi = 0.0, acc = 0.0;
    for (const auto* r : rows) {
      t += r->tcte;
      acc += r->accuracy;
      lo = std::min(lo, r->tcte);
      hi = std::max(hi, r->tcte);
    }
    const double n = static_cast<double>(rows.size());
    std::snprintf(line, sizeof line, "  %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f\n", key.second, t / n, lo, hi, acc / n);
    out << line;
  }
  return out.str();
}

inline std::string baseline_summary(const std::vector<BaselineTable>& tables) {
  std::ostringstream out;
  std::map<std::string, std::vector<const BaselineRow*>> by_kind;
  std::vector<std::string> order;
  for (const auto& tab : tables)
    for (const auto& r : tab.rows) {
      if (!by_kind.count(r.kind)) order.push_back(r.kind);
      by_kind[r.kind].push_back(&r);
    }
  char line[160];
  out << "baseline topologies (" << tables.size() << " seeds)\n";
  std::snprintf(line, sizeof line, "  %-12s %-10s %-12s %-12s %-10s\n", "kind", "sparsity", "error_tcte", "insight_tcte",
                "accuracy");
  out << line;
  for (const auto& k : order) {
    double s = 0, e = 0, i = 0, a = 0;
    for (const auto* r : by_kind[k]) {
      s += r->sparsity;
      e += r->error_tcte;
      i += r->insight_tcte;
      a += r->accuracy;
    }
    const double n = static_cast<double>(by_kind[k].size());
    std::snprintf(line, sizeof line, "  %-12s %-10.4f %-12.4f %-12.4f %-10.4f\n", k.c_str(), s / n, e / n, i / n, a / n);
    out << line;
  }
  return out.str();
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string canonical_json(const nlohmann::json& j) { return j.dump(); }

struct RunManifest {
  std::string command;
  std::uint64_t master_seed = 0;
  nlohmann::json config = nlohmann::json::object();
  std::vector<AgentSpec> agents;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // file name -> sha256
  std::string started;
  std::string finished;
};

inline nlohmann::json manifest_json(const RunManifest& m) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : m.agents)
    agents.push_back({{"index", a.index}, {"competence", a.competence}, {"social_weight", a.social_weight}});
  return {{"tool", kToolName},
          {"version", kToolVersion},
          {"command", m.command},
          {"seed", m.master_seed},
          {"config", m.config},
          {"config_digest", sha256_hex(canonical_json(m.config))},
          {"agents", agents},
          {"inputs", m.inputs},
          {"outputs", m.outputs},
          {"started", m.started},
          {"finished", m.finished}};
}

// Problems found when recomputing the digests recorded in a manifest; empty
// when everything still matches. Output digests are checked relative to `dir`.
inline std::vector<std::string> verify_manifest(const nlohmann::json& manifest, const std::filesystem::path& dir = {}) {
  std::vector<std::string> problems;
  try {
    if (sha256_hex(canonical_json(manifest.at("config"))) != manifest.at("config_digest").get<std::string>())
      problems.push_back("config digest mismatch");
    for (const auto& [path, digest] : manifest.at("inputs").items()) {
      try {
        if (file_digest(path) != digest.get<std::string>()) problems.push_back("input changed: " + path);
      } catch (const IoError&) {
        problems.push_back("input missing: " + path);
      }
    }
    if (!dir.empty())
      for (const auto& [name, digest] : manifest.at("outputs").items()) {
        try {
          if (file_digest((dir / name).string()) != digest.get<std::string>())
            problems.push_back("output changed: " + name);
        } catch (const IoError&) {
          problems.push_back("output missing: " + name);
        }
      }
  } catch (const nlohmann::json::exception& e) {
    problems.push_back(std::string("malformed manifest: ") + e.what());
  }
  return problems;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  out.close();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

// Collects data files for one invocation and writes them with a manifest.
class ReportWriter {
 public:
  ReportWriter(std::filesystem::path dir, RunManifest manifest) : dir_(std::move(dir)), manifest_(std::move(manifest)) {
    if (manifest_.started.empty()) manifest_.started = utc_timestamp();
  }

  void add(const std::string& name, std::string contents) { files_.emplace_back(name, std::move(contents)); }

  // Writes every data file, then manifest.json; returns all written paths.
  std::vector<std::filesystem::path> write() {
    ensure_dir(dir_);
    std::vector<std::filesystem::path> paths;
    for (const auto& [name, text] : files_) {
      write_text(dir_ / name, text);
      manifest_.outputs[name] = sha256_hex(text);
      paths.push_back(dir_ / name);
    }
    manifest_.finished = utc_timestamp();
    write_text(dir_ / "manifest.json", manifest_json(manifest_).dump(2) + "\n");
    paths.push_back(dir_ / "manifest.json");
    return paths;
  }

 private:
  std::filesystem::path dir_;
  RunManifest manifest_;
  std::vector<std::pair<std::string, std::string>> files_;
};

inline std::vector<std::filesystem::path> write_report(const std::vector<SweepReport>& reports,
                                                       const std::filesystem::path& dir, RunManifest manifest) {
  ReportWriter w(dir, std::move(manifest));
  std::string name = "sweep.csv";
  if (!reports.empty()) name = std::string("sweep_") + direction_label(reports.front().direction) + ".csv";
  w.add(name, sweep_csv(reports));
  w.add("summary.txt", sweep_summary(reports));
  return w.write();
}

}  // namespace topolab::harness
