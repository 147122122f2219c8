#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "topolab/agents.hpp"
#include "topolab/error.hpp"
#include "topolab/protocol.hpp"
#include "topolab/rng.hpp"
#include "topolab/topology.hpp"

namespace topolab {

struct CapeRecord {
  std::size_t agent = 0;
  int flipped = 0;
  int y_orig = 0;
  int y_cf = 0;
};

struct TcteRecord {
  double topology_sparsity = 0.0;
  double tcte = 0.0;
  double accuracy = 0.0;
  std::size_t n_queries = 0;
};

enum class PropagationKind { ErrorPropagation, InsightPropagation };

inline const char* direction_label(PropagationKind d) {
  return d == PropagationKind::ErrorPropagation ? "error" : "insight";
}

struct SweepReport {
  PropagationKind direction = PropagationKind::ErrorPropagation;
  std::uint64_t seed = 0;
  std::vector<TcteRecord> rows;  // ascending sparsity
};

using OutcomePair = std::pair<Outcome, Outcome>;

// Seed for one (run seed, task) cell; keyed by task id so results do not
// depend on task order.
inline std::uint64_t task_seed(std::uint64_t run_seed, const TaskItem& task) {
  return derive_seed(run_seed, {fnv1a64(task.id)});
}

// Factual and counterfactual runs under identical derived streams.
inline OutcomePair run_counterfactual_pair(const Topology& t, std::span<const AgentSpec> agents, const TaskItem& task,
                                           const RunConfig& cfg, const Intervention& iv) {
  if (iv.target >= t.n()) throw InvalidArgument("intervention target out of range");
  return {run_dialogue(t, agents, task, cfg), run_dialogue(t, agents, task, cfg, iv)};
}

inline int cape(bool y_orig, bool y_cf) noexcept { return y_orig != y_cf ? 1 : 0; }
inline int cape(const OutcomePair& pair) noexcept { return cape(pair.first.correct, pair.second.correct); }

inline double degree_weight(const Topology& t, std::size_t i) {
  return 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(degree(t, i), 1)));
}

// (1/N) sum_i CAPE_i / sqrt(max(d_i, 1)); needs exactly one record per agent.
inline double tcte(std::span<const CapeRecord> capes, const Topology& t) {
  const std::size_t n = t.n();
  std::vector<int> seen(n, 0);
  double sum = 0.0;
  for (const auto& c : capes) {
    if (c.agent >= n) throw InvalidArgument("CAPE record for agent outside the topology");
    if (seen[c.agent]++) throw InvalidArgument("duplicate CAPE record for agent " + std::to_string(c.agent));
    sum += static_cast<double>(c.flipped) * degree_weight(t, c.agent);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) throw InvalidArgument("missing CAPE record for agent " + std::to_string(i));
  return sum / static_cast<double>(n);
}

inline Intervention intervention_for(PropagationKind kind, std::size_t target) {
  if (kind == PropagationKind::ErrorPropagation) return {target, ForceError{}};
  return {target, ForceAnswer{}};
}

struct QueryEffect {
  bool y_orig = false;
  double tcte = 0.0;
  std::vector<CapeRecord> capes;
};

// Intervenes on every agent in turn for one query (seeded per task).
inline QueryEffect query_effect(const Topology& t, std::span<const AgentSpec> agents, const TaskItem& task,
                                const RunConfig& cfg, PropagationKind kind) {
  RunConfig cell = cfg;
  cell.seed = task_seed(cfg.seed, task);
  QueryEffect q;
  q.y_orig = run_dialogue(t, agents, task, cell).correct;
  for (std::size_t i = 0; i < t.n(); ++i) {
    const bool y_cf = run_dialogue(t, agents, task, cell, intervention_for(kind, i)).correct;
    q.capes.push_back({i, cape(q.y_orig, y_cf), q.y_orig ? 1 : 0, y_cf ? 1 : 0});
  }
  q.tcte = tcte(q.capes, t);
  return q;
}

inline double system_accuracy(const Topology& t, std::span<const AgentSpec> agents, std::span<const TaskItem> tasks,
                              const RunConfig& cfg) {
  if (tasks.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& task : tasks) {
    RunConfig cell = cfg;
    cell.seed = task_seed(cfg.seed, task);
    correct += run_dialogue(t, agents, task, cell).correct ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(tasks.size());
}

struct SweepOptions {
  // Re-check original correctness at every step and skip tasks that do not
  // qualify there.
  bool reverify = false;
  // Tasks for the accuracy column; the intervention pool when empty.
  std::span<const TaskItem> accuracy_tasks = {};
};

inline double sparsity_or_zero(const Topology& t) { return t.n() < 2 ? 0.0 : sparsity(t); }

// Mean per-query TCTE and system accuracy at one topology.
inline TcteRecord evaluate_topology(const Topology& t, std::span<const AgentSpec> agents,
                                    std::span<const TaskItem> tasks, const RunConfig& cfg, PropagationKind kind,
                                    const SweepOptions& opts = {}) {
  if (tasks.empty()) throw InvalidArgument("intervention task set is empty");
  TcteRecord row;
  row.topology_sparsity = sparsity_or_zero(t);
  double sum = 0.0;
  for (const auto& task : tasks) {
    const auto q = query_effect(t, agents, task, cfg, kind);
    const bool qualifies = kind == PropagationKind::ErrorPropagation ? q.y_orig : !q.y_orig;
    if (opts.reverify && !qualifies) continue;
    sum += q.tcte;
    ++row.n_queries;
  }
  row.tcte = row.n_queries ? sum / static_cast<double>(row.n_queries) : 0.0;
  row.accuracy = system_accuracy(t, agents, opts.accuracy_tasks.empty() ? tasks : opts.accuracy_tasks, cfg);
  return row;
}

namespace detail {

inline SweepReport run_sweep(std::span<const AgentSpec> agents, std::span<const TaskItem> tasks, const RunConfig& cfg,
                             const SweepPath& path, PropagationKind kind, const SweepOptions& opts) {
  if (tasks.empty()) throw InvalidArgument("intervention task set is empty");
  SweepReport report{kind, cfg.seed, {}};
  for (const auto& step : path.steps) report.rows.push_back(evaluate_topology(step, agents, tasks, cfg, kind, opts));
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const TcteRecord& a, const TcteRecord& b) {
    return a.topology_sparsity < b.topology_sparsity;
  });
  return report;
}

}  // namespace detail

// ForceError on every agent of every step, over originally-correct tasks.
inline SweepReport sweep_error_propagation(std::span<const AgentSpec> agents, std::span<const TaskItem> tasks_correct,
                                           const RunConfig& cfg, const SweepPath& path,
                                           const SweepOptions& opts = {}) {
  if (path.direction != SweepDirection::Sparsify)
    throw InvalidArgument("error-propagation sweep expects a sparsify path");
  return detail::run_sweep(agents, tasks_correct, cfg, path, PropagationKind::ErrorPropagation, opts);
}

// ForceAnswer on every agent of every step, over originally-incorrect tasks.
inline SweepReport sweep_insight_propagation(std::span<const AgentSpec> agents,
                                             std::span<const TaskItem> tasks_incorrect, const RunConfig& cfg,
                                             const SweepPath& path, const SweepOptions& opts = {}) {
  if (path.direction != SweepDirection::Densify)
    throw InvalidArgument("insight-propagation sweep expects a densify path");
  return detail::run_sweep(agents, tasks_incorrect, cfg, path, PropagationKind::InsightPropagation, opts);
}

struct BaselineRow {
  std::string kind;
  double sparsity = 0.0;
  double error_tcte = 0.0;
  double insight_tcte = 0.0;
  double accuracy = 0.0;
};

inline std::vector<BaselineRow> baseline_suite(std::span<const AgentSpec> agents,
                                               std::span<const TaskItem> tasks_correct,
                                               std::span<const TaskItem> tasks_incorrect, const RunConfig& cfg,
                                               std::span<const TopologyKind> kinds, const SweepOptions& opts = {}) {
  if (kinds.empty()) throw InvalidArgument("baseline suite needs at least one topology kind");
  std::vector<BaselineRow> rows;
  for (std::size_t idx = 0; idx < kinds.size(); ++idx) {
    Stream rng(cfg.seed, {fnv1a64("baseline-random"), idx});
    const Topology t = build_named(kinds[idx], agents.size(), &rng);
    const auto err = evaluate_topology(t, agents, tasks_correct, cfg, PropagationKind::ErrorPropagation, opts);
    const auto ins = evaluate_topology(t, agents, tasks_incorrect, cfg, PropagationKind::InsightPropagation, opts);
    BaselineRow row{kind_label(kinds[idx]), sparsity_or_zero(t), err.tcte, ins.tcte, 0.0};
    row.accuracy = opts.accuracy_tasks.empty() ? err.accuracy : system_accuracy(t, agents, opts.accuracy_tasks, cfg);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace topolab
