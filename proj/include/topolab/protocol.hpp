#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "topolab/agents.hpp"
#include "topolab/error.hpp"
#include "topolab/llm_client.hpp"
#include "topolab/rng.hpp"
#include "topolab/topology.hpp"

namespace topolab {

struct MajorityVote {};
struct LastAgent {};
struct Judge {
  std::size_t agent;
};
using Aggregation = std::variant<MajorityVote, LastAgent, Judge>;

struct SyntheticBackend {};
struct LlmBackend {
  EndpointConfig endpoint;
};
using Backend = std::variant<SyntheticBackend, LlmBackend>;

struct RunConfig {
  std::size_t rounds = 3;
  Aggregation aggregation = MajorityVote{};
  std::uint64_t seed = 0;
  Backend backend = SyntheticBackend{};
  bool record_prompts = false;

  void validate(std::size_t n) const {
    if (rounds == 0) throw ConfigError("rounds must be at least 1");
    if (const auto* j = std::get_if<Judge>(&aggregation); j && j->agent >= n)
      throw ConfigError("judge agent " + std::to_string(j->agent) + " out of range for n=" + std::to_string(n));
  }
};

struct Transcript {
  std::vector<std::vector<AnswerIndex>> answers;  // rounds x agents
  std::vector<std::vector<std::string>> texts;    // rounds x agents
  std::vector<Prompt> prompts;                    // rounds x agents, row-major, when recorded
  std::size_t message_chars = 0;                  // characters delivered along edges
};

struct Outcome {
  AnswerIndex final = kNoAnswer;
  bool correct = false;
  Transcript transcript;
};

// Majority ties go to the smallest answer index; unparsed replies are ignored.
inline AnswerIndex aggregate(std::span<const AnswerIndex> answers, const Aggregation& mode, const TaskItem& task,
                             std::span<const std::size_t> order = {}) {
  if (answers.empty()) throw InvalidArgument("cannot aggregate an empty answer list");
  if (std::holds_alternative<MajorityVote>(mode)) {
    std::vector<std::size_t> count(task.alphabet_size, 0);
    for (AnswerIndex a : answers)
      if (a < task.alphabet_size) ++count[a];
    AnswerIndex best = kNoAnswer;
    std::size_t best_count = 0;
    for (AnswerIndex a = 0; a < count.size(); ++a)
      if (count[a] > best_count) {
        best = a;
        best_count = count[a];
      }
    return best;
  }
  if (std::holds_alternative<LastAgent>(mode)) {
    const std::size_t last = order.empty() ? answers.size() - 1 : order.back();
    return answers[last];
  }
  const std::size_t j = std::get<Judge>(mode).agent;
  if (j >= answers.size()) throw InvalidArgument("judge agent out of range");
  return answers[j];
}

// Called once per agent activation with the senders whose current-round
// output the agent consumed and whether its own previous answer was included.
using DialogueObserver =
    std::function<void(std::size_t round, std::size_t agent, const std::vector<std::size_t>& senders, bool self)>;

// Runs K rounds over `t`. Each agent activation draws from the stream
// (seed, agent, round), so an intervention on one agent leaves every other
// agent's randomness unchanged.
inline Outcome run_dialogue(const Topology& t, std::span<const AgentSpec> agents, const TaskItem& task,
                            const RunConfig& cfg, const std::optional<Intervention>& iv = std::nullopt,
                            const DialogueObserver& observer = {}) {
  const std::size_t n = t.n();
  if (agents.size() != n)
    throw ConfigError("topology has " + std::to_string(n) + " agents but " + std::to_string(agents.size()) +
                      " agent specs were given");
  cfg.validate(n);
  task.validate();
  std::optional<ForcedOutput> forced;
  if (iv) {
    if (iv->target >= n) throw InvalidArgument("intervention target out of range");
    forced = apply_intervention(*iv, task);
  }
  const auto* llm = std::get_if<LlmBackend>(&cfg.backend);
  if (forced && !llm && forced->answer == kNoAnswer)
    throw InvalidArgument("synthetic backend needs an intervention with a parseable answer");

  const auto order = topological_sort(t);
  std::vector<std::vector<std::size_t>> senders(n);
  for (std::size_t i = 0; i < n; ++i) senders[i] = t.in_neighbors(i);

  Outcome out;
  Transcript& tr = out.transcript;
  tr.answers.assign(cfg.rounds, std::vector<AnswerIndex>(n, kNoAnswer));
  tr.texts.assign(cfg.rounds, std::vector<std::string>(n));
  const bool keep_prompts = cfg.record_prompts || llm != nullptr;
  if (keep_prompts) tr.prompts.resize(cfg.rounds * n);

  std::vector<AnswerIndex> incoming;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    for (std::size_t i : order) {
      const bool self = r > 0;
      if (observer) observer(r + 1, i, senders[i], self);

      incoming.clear();
      std::vector<NeighborMessage> msgs;
      for (std::size_t j : senders[i]) {
        if (tr.answers[r][j] != kNoAnswer) incoming.push_back(tr.answers[r][j]);
        tr.message_chars += tr.texts[r][j].size();
        if (keep_prompts) msgs.push_back({j, tr.texts[r][j]});
      }
      if (self && tr.answers[r - 1][i] != kNoAnswer) incoming.push_back(tr.answers[r - 1][i]);

      if (keep_prompts) {
        std::vector<std::string> history;
        for (std::size_t q = 0; q < r; ++q) history.push_back(tr.texts[q][i]);
        tr.prompts[r * n + i] = compose_prompt(agents[i], task, std::move(msgs), r + 1, history);
      }

      if (forced && iv->target == i) {
        tr.answers[r][i] = forced->answer;
        tr.texts[r][i] = forced->text;
      } else if (llm) {
        tr.texts[r][i] = llm_respond(tr.prompts[r * n + i], llm->endpoint);
        tr.answers[r][i] = parse_answer(tr.texts[r][i], task.alphabet_size).value_or(kNoAnswer);
      } else {
        Stream rng(cfg.seed, {i, r + 1});
        tr.answers[r][i] = synthetic_respond(agents[i], task, incoming, rng);
        tr.texts[r][i] = render_answer_message(tr.answers[r][i]);
      }
    }
  }
  out.final = aggregate(tr.answers.back(), cfg.aggregation, task, order);
  out.correct = out.final == task.gold;
  return out;
}

inline nlohmann::json transcript_json(const Outcome& o, const TaskItem& task, std::uint64_t seed) {
  nlohmann::json answers = nlohmann::json::array();
  for (const auto& row : o.transcript.answers) {
    nlohmann::json r = nlohmann::json::array();
    for (AnswerIndex a : row) r.push_back(a == kNoAnswer ? nlohmann::json(nullptr) : nlohmann::json(a));
    answers.push_back(std::move(r));
  }
  return {{"task_id", task.id},
          {"seed", seed},
          {"answers", std::move(answers)},
          {"final", o.final == kNoAnswer ? nlohmann::json(nullptr) : nlohmann::json(o.final)},
          {"correct", o.correct ? 1 : 0},
          {"message_chars", o.transcript.message_chars}};
}

}  // namespace topolab
