#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "topolab/error.hpp"
#include "topolab/rng.hpp"

namespace topolab {

using AnswerIndex = std::size_t;

// Sentinel for an LLM reply whose answer could not be parsed.
inline constexpr AnswerIndex kNoAnswer = static_cast<AnswerIndex>(-1);

struct AgentSpec {
  std::size_t index = 0;
  std::string role_text;
  double competence = 0.5;     // c_i, synthetic backend only
  double social_weight = 0.5;  // lambda_i, synthetic backend only

  void validate() const {
    if (!(competence >= 0.0 && competence <= 1.0))
      throw InvalidArgument("agent " + std::to_string(index) + ": competence must lie in [0, 1]");
    if (!(social_weight >= 0.0 && social_weight <= 1.0))
      throw InvalidArgument("agent " + std::to_string(index) + ": social_weight must lie in [0, 1]");
  }
};

// Builds n homogeneous agents with generic role texts.
inline std::vector<AgentSpec> uniform_agents(std::size_t n, double competence, double social_weight) {
  std::vector<AgentSpec> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({i, "You are agent " + std::to_string(i) + ", a careful generalist problem solver.", competence,
                   social_weight});
  return out;
}

struct TaskItem {
  std::string id;
  std::string question;
  std::size_t alphabet_size = 2;
  AnswerIndex gold = 0;
  std::vector<std::string> choices;  // empty or exactly alphabet_size entries

  void validate() const {
    if (alphabet_size < 2) throw InvalidArgument("task '" + id + "': alphabet needs at least two answers");
    if (gold >= alphabet_size)
      throw InvalidArgument("task '" + id + "': gold answer " + std::to_string(gold) + " outside alphabet of size " +
                            std::to_string(alphabet_size));
    if (!choices.empty() && choices.size() != alphabet_size)
      throw InvalidArgument("task '" + id + "': choices must list exactly " + std::to_string(alphabet_size) +
                            " answers");
  }
};

inline std::string answer_label(AnswerIndex a) {
  if (a == kNoAnswer) return "?";
  if (a < 26) return std::string(1, static_cast<char>('A' + a));
  return "#" + std::to_string(a);
}

// The query as shown to agents: the question, followed by lettered choices when present.
inline std::string query_text(const TaskItem& task) {
  std::string out = task.question;
  for (std::size_t a = 0; a < task.choices.size(); ++a) out += "\n(" + answer_label(a) + ") " + task.choices[a];
  return out;
}

// ---------------------------------------------------------------------------
// Prompts

struct NeighborMessage {
  std::size_t sender;
  std::string text;
};

struct Prompt {
  std::string system_text;
  std::string user_text;
  friend bool operator==(const Prompt&, const Prompt&) = default;
};

// `history` holds the agent's own earlier responses, oldest first.
inline Prompt compose_prompt(const AgentSpec& spec, const TaskItem& task, std::vector<NeighborMessage> neighbor_msgs,
                             std::size_t round, std::span<const std::string> history = {}) {
  Prompt p;
  p.system_text = spec.role_text;
  if (!history.empty()) {
    p.system_text += "\n\nYour previous responses:";
    for (std::size_t r = 0; r < history.size(); ++r)
      p.system_text += "\n[round " + std::to_string(r + 1) + "] " + history[r];
  }
  p.system_text += "\n\nThis is round " + std::to_string(round) + ". End your reply with 'The answer is (X)'.";

  std::stable_sort(neighbor_msgs.begin(), neighbor_msgs.end(),
                   [](const NeighborMessage& a, const NeighborMessage& b) { return a.sender < b.sender; });
  p.user_text = query_text(task);
  for (const auto& m : neighbor_msgs) p.user_text += "\n\nAgent " + std::to_string(m.sender) + " says: " + m.text;
  return p;
}

inline std::string render_answer_message(AnswerIndex a) { return "The answer is (" + answer_label(a) + ")."; }

// Extracts a choice letter from free text. Prefers a letter following the last
// "answer" keyword, then the first standalone in-alphabet letter.
inline std::optional<AnswerIndex> parse_answer(std::string_view text, std::size_t alphabet_size) {
  const std::size_t k = std::min<std::size_t>(alphabet_size, 26);
  auto standalone_letter = [&](std::size_t from) -> std::optional<AnswerIndex> {
    for (std::size_t i = from; i < text.size(); ++i) {
      const char c = text[i];
      if (c < 'A' || c >= static_cast<char>('A' + k)) continue;
      const bool left_ok = i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
      const bool right_ok = i + 1 == text.size() || !std::isalnum(static_cast<unsigned char>(text[i + 1]));
      if (left_ok && right_ok) return static_cast<AnswerIndex>(c - 'A');
    }
    return std::nullopt;
  };
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const auto kw = lower.rfind("answer");
  if (kw != std::string::npos)
    if (auto a = standalone_letter(kw + 6)) return a;
  return standalone_letter(0);
}

// ---------------------------------------------------------------------------
// Synthetic agent

// p(a) = (1 - lambda) * prior(a) + lambda * freq_incoming(a), with
// prior(gold) = c and prior(a != gold) = (1 - c) / (k - 1). Empty incoming
// gives the prior.
inline std::vector<double> answer_distribution(const AgentSpec& spec, const TaskItem& task,
                                               std::span<const AnswerIndex> incoming) {
  const std::size_t k = task.alphabet_size;
  std::vector<double> p(k, (1.0 - spec.competence) / static_cast<double>(k - 1));
  p[task.gold] = spec.competence;
  if (incoming.empty()) return p;
  std::vector<double> freq(k, 0.0);
  for (AnswerIndex a : incoming) {
    if (a >= k) throw InvalidArgument("incoming answer outside the task alphabet");
    freq[a] += 1.0;
  }
  const double lambda = spec.social_weight;
  const double inv = 1.0 / static_cast<double>(incoming.size());
  for (std::size_t a = 0; a < k; ++a) p[a] = (1.0 - lambda) * p[a] + lambda * freq[a] * inv;
  return p;
}

// Inverse-CDF lookup in index order. u in [0, 1).
inline AnswerIndex sample_from(std::span<const double> p, double u) {
  double acc = 0.0;
  AnswerIndex last_positive = 0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    acc += p[a];
    last_positive = a;
    if (u < acc) return a;
  }
  return last_positive;
}

// Consumes exactly one uniform from `rng`.
inline AnswerIndex synthetic_respond(const AgentSpec& spec, const TaskItem& task, std::span<const AnswerIndex> incoming,
                                     Stream& rng) {
  const auto p = answer_distribution(spec, task, incoming);
  return sample_from(p, rng.uniform());
}

// ---------------------------------------------------------------------------
// Interventions: do(O_i := forced) on exactly one agent, in every round.

struct ForceError {};
struct ForceAnswer {};
struct Custom {
  std::optional<AnswerIndex> answer;
  std::string text;  // adversarial text for the LLM backend; may be empty
};
using InterventionMode = std::variant<ForceError, ForceAnswer, Custom>;

struct Intervention {
  std::size_t target = 0;
  InterventionMode mode = ForceError{};
};

struct ForcedOutput {
  AnswerIndex answer = kNoAnswer;
  std::string text;
};

inline ForcedOutput apply_intervention(const Intervention& iv, const TaskItem& task) {
  const std::size_t k = task.alphabet_size;
  if (std::holds_alternative<ForceAnswer>(iv.mode)) return {task.gold, render_answer_message(task.gold)};
  if (std::holds_alternative<ForceError>(iv.mode)) {
    const AnswerIndex wrong = (task.gold + 1) % k;
    return {wrong, render_answer_message(wrong)};
  }
  const auto& c = std::get<Custom>(iv.mode);
  if (c.answer) {
    if (*c.answer >= k)
      throw InvalidArgument("custom intervention answer " + std::to_string(*c.answer) + " outside alphabet of size " +
                            std::to_string(k));
    return {*c.answer, c.text.empty() ? render_answer_message(*c.answer) : c.text};
  }
  if (c.text.empty()) throw InvalidArgument("custom intervention needs an answer or a text");
  return {parse_answer(c.text, k).value_or(kNoAnswer), c.text};
}

}  // namespace topolab
