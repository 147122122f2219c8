#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topolab/agents.hpp"
#include "topolab/causal.hpp"
#include "topolab/error.hpp"
#include "topolab/protocol.hpp"
#include "topolab/rng.hpp"
#include "topolab/topology.hpp"

namespace topolab::harness {

namespace detail {

inline AnswerIndex parse_gold(const nlohmann::json& gold, std::size_t k) {
  if (gold.is_number_integer()) {
    const auto v = gold.get<long long>();
    if (v < 0) throw InvalidArgument("gold index must be non-negative");
    return static_cast<AnswerIndex>(v);
  }
  if (gold.is_string()) {
    const auto s = gold.get<std::string>();
    if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'Z') return static_cast<AnswerIndex>(s[0] - 'A');
    if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'z') return static_cast<AnswerIndex>(s[0] - 'a');
    throw InvalidArgument("gold letter must be a single letter A-Z, got '" + s + "'");
  }
  (void)k;
  throw InvalidArgument("gold must be an index or a choice letter");
}

}  // namespace detail

// One task per line: {"id", "question", "choices", "gold"}; gold is an index
// or a letter (A -> 0). Lines without choices must carry "alphabet_size".
inline std::vector<TaskItem> parse_tasks(std::istream& in, const std::string& source = "<tasks>") {
  std::vector<TaskItem> tasks;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      TaskItem t;
      t.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      t.question = j.at("question").get<std::string>();
      if (j.contains("choices") && !j.at("choices").is_null()) t.choices = j.at("choices").get<std::vector<std::string>>();
      if (!t.choices.empty())
        t.alphabet_size = t.choices.size();
      else if (j.contains("alphabet_size"))
        t.alphabet_size = j.at("alphabet_size").get<std::size_t>();
      else
        throw InvalidArgument("task needs \"choices\" or \"alphabet_size\"");
      t.gold = detail::parse_gold(j.at("gold"), t.alphabet_size);
      t.validate();
      if (!ids.insert(t.id).second) throw InvalidArgument("duplicate task id '" + t.id + "'");
      tasks.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(where + "malformed task line: " + e.what());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(where + e.what());
    }
  }
  if (tasks.empty()) throw InvalidArgument(source + ": task file contains no tasks");
  return tasks;
}

inline std::vector<TaskItem> load_tasks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open task file '" + path + "'");
  return parse_tasks(in, path);
}

inline nlohmann::json task_json(const TaskItem& t) {
  nlohmann::json j = {{"id", t.id}, {"question", t.question}, {"gold", t.gold}};
  if (t.choices.empty())
    j["alphabet_size"] = t.alphabet_size;
  else
    j["choices"] = t.choices;
  return j;
}

// Deterministic stand-in questions with uniformly drawn gold answers.
inline std::vector<TaskItem> generate_synthetic_tasks(std::size_t count, std::size_t k, std::uint64_t seed) {
  if (count == 0) throw InvalidArgument("synthetic task count must be positive");
  if (k < 2) throw InvalidArgument("synthetic tasks need an alphabet of at least two answers");
  std::size_t width = 4;
  for (std::size_t c = count - 1; c >= 10000; c /= 10) ++width;
  std::vector<TaskItem> tasks;
  tasks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string num = std::to_string(i);
    num.insert(0, width > num.size() ? width - num.size() : 0, '0');
    TaskItem t;
    t.id = "syn-" + num;
    t.question = "Synthetic question " + t.id + ": select the single correct option.";
    t.alphabet_size = k;
    Stream rng(seed, {fnv1a64("synthetic-task"), i});
    t.gold = static_cast<AnswerIndex>(rng.below(k));
    tasks.push_back(std::move(t));
  }
  return tasks;
}

inline int check_answer(AnswerIndex final, const TaskItem& task) {
  if (final >= task.alphabet_size)
    throw InvalidArgument("answer " + std::to_string(final) + " outside alphabet of size " +
                          std::to_string(task.alphabet_size));
  return final == task.gold ? 1 : 0;
}

struct TaskPools {
  std::vector<TaskItem> correct;
  std::vector<TaskItem> incorrect;
  std::size_t shortfall_correct = 0;
  std::size_t shortfall_incorrect = 0;
};

// Runs the un-intervened system once per task (seeded per task, matching the
// sweeps) and fills both pools in task order up to their targets.
inline TaskPools partition_by_correctness(const Topology& t, std::span<const AgentSpec> agents,
                                          std::span<const TaskItem> tasks, const RunConfig& cfg,
                                          std::size_t target_correct, std::size_t target_incorrect) {
  TaskPools pools;
  for (const auto& task : tasks) {
    if (pools.correct.size() >= target_correct && pools.incorrect.size() >= target_incorrect) break;
    RunConfig cell = cfg;
    cell.seed = task_seed(cfg.seed, task);
    const bool ok = run_dialogue(t, agents, task, cell).correct;
    auto& pool = ok ? pools.correct : pools.incorrect;
    if (pool.size() < (ok ? target_correct : target_incorrect)) pool.push_back(task);
  }
  pools.shortfall_correct = target_correct - pools.correct.size();
  pools.shortfall_incorrect = target_incorrect - pools.incorrect.size();
  if ((target_correct > 0 && pools.correct.empty()) || (target_incorrect > 0 && pools.incorrect.empty())) {
    std::ostringstream msg;
    msg << "task pools exhausted: found " << pools.correct.size() << "/" << target_correct
        << " originally-correct and " << pools.incorrect.size() << "/" << target_incorrect
        << " originally-incorrect tasks";
    throw ShortfallError(msg.str(), pools.correct.size(), pools.incorrect.size());
  }
  return pools;
}

}  // namespace topolab::harness
