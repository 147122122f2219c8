#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "topolab/agents.hpp"
#include "topolab/error.hpp"
#include "topolab/protocol.hpp"
#include "topolab/topology.hpp"

namespace topolab {

enum class FlipCondition { Any, OriginallyCorrect, OriginallyIncorrect };

namespace detail {

// Half-open slices of [0, 1) that sample_from maps to each answer. The last
// positive-mass answer absorbs any rounding gap up to 1.
inline std::vector<std::pair<double, double>> answer_intervals(std::span<const double> p) {
  std::vector<std::pair<double, double>> iv(p.size(), {0.0, 0.0});
  double acc = 0.0;
  std::size_t last = p.size();
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    iv[a] = {acc, acc + p[a]};
    acc += p[a];
    last = a;
  }
  if (last < p.size()) iv[last].second = 1.0;
  return iv;
}

inline std::uint64_t ipow(std::uint64_t b, std::size_t e) {
  std::uint64_t r = 1;
  for (std::size_t i = 0; i < e; ++i) {
    r *= b;
    if (r > (1ULL << 40)) return r;
  }
  return r;
}

}  // namespace detail

// Exact probability that system correctness differs between the natural and
// the intervened process when both share one uniform per (agent, round), as
// run_dialogue does. Enumerates the joint answer assignments of both
// processes, agent by agent in topological order. With a condition, returns
// P(flip | y_orig matches the condition).
inline double exact_flip_probability(const Topology& t, std::span<const AgentSpec> agents, const TaskItem& task,
                                     const RunConfig& cfg, const std::optional<Intervention>& iv,
                                     FlipCondition condition = FlipCondition::Any) {
  const std::size_t n = t.n();
  const std::size_t k = task.alphabet_size;
  if (agents.size() != n) throw ConfigError("agent count does not match topology");
  if (!std::holds_alternative<SyntheticBackend>(cfg.backend))
    throw InvalidArgument("exact flip probability needs the synthetic backend");
  if (detail::ipow(k, n) > 4096 || cfg.rounds > 3)
    throw TractabilityError("exact enumeration needs k^n <= 4096 and K <= 3");
  cfg.validate(n);
  task.validate();
  std::optional<ForcedOutput> forced;
  if (iv) {
    if (iv->target >= n) throw InvalidArgument("intervention target out of range");
    forced = apply_intervention(*iv, task);
    if (forced->answer == kNoAnswer) throw InvalidArgument("exact enumeration needs an intervention with an answer");
  }

  // State layout: [prev_orig | cur_orig | prev_cf | cur_cf], each n entries;
  // `k` marks "not yet produced".
  const auto blank = static_cast<std::uint8_t>(k);
  using State = std::vector<std::uint8_t>;
  std::map<State, double> states{{State(4 * n, blank), 1.0}};
  const auto order = topological_sort(t);

  std::vector<AnswerIndex> incoming;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    for (std::size_t i : order) {
      const auto senders = t.in_neighbors(i);
      std::map<State, double> next;
      for (const auto& [s, mass] : states) {
        auto dist_for = [&](std::size_t prev_off, std::size_t cur_off) {
          incoming.clear();
          for (std::size_t j : senders) incoming.push_back(s[cur_off + j]);
          if (r > 0) incoming.push_back(s[prev_off + i]);
          return answer_distribution(agents[i], task, incoming);
        };
        const auto iv_orig = detail::answer_intervals(dist_for(0, n));
        std::vector<std::pair<double, double>> iv_cf;
        if (forced && iv->target == i) {
          iv_cf.assign(k, {0.0, 0.0});
          iv_cf[forced->answer] = {0.0, 1.0};
        } else {
          iv_cf = detail::answer_intervals(dist_for(2 * n, 3 * n));
        }
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t b = 0; b < k; ++b) {
            const double overlap = std::min(iv_orig[a].second, iv_cf[b].second) -
                                   std::max(iv_orig[a].first, iv_cf[b].first);
            if (overlap <= 0.0) continue;
            State ns = s;
            ns[n + i] = static_cast<std::uint8_t>(a);
            ns[3 * n + i] = static_cast<std::uint8_t>(b);
            next[ns] += mass * overlap;
          }
        }
      }
      states = std::move(next);
    }
    // Round boundary: current answers become previous answers.
    std::map<State, double> shifted;
    for (const auto& [s, mass] : states) {
      State ns(4 * n, blank);
      std::copy(s.begin() + n, s.begin() + 2 * n, ns.begin());
      std::copy(s.begin() + 3 * n, s.begin() + 4 * n, ns.begin() + 2 * n);
      shifted[ns] += mass;
    }
    states = std::move(shifted);
  }

  double p_flip = 0.0, p_cond = 0.0;
  std::vector<AnswerIndex> last_orig(n), last_cf(n);
  for (const auto& [s, mass] : states) {
    for (std::size_t i = 0; i < n; ++i) {
      last_orig[i] = s[i];
      last_cf[i] = s[2 * n + i];
    }
    const bool y_orig = aggregate(last_orig, cfg.aggregation, task, order) == task.gold;
    const bool y_cf = aggregate(last_cf, cfg.aggregation, task, order) == task.gold;
    const bool in_event = condition == FlipCondition::Any ||
                          (condition == FlipCondition::OriginallyCorrect ? y_orig : !y_orig);
    if (!in_event) continue;
    p_cond += mass;
    if (y_orig != y_cf) p_flip += mass;
  }
  if (condition == FlipCondition::Any) return p_flip;
  if (p_cond <= 0.0) throw InvalidArgument("conditioning event has probability zero");
  return p_flip / p_cond;
}

}  // namespace topolab
