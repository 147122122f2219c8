#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topolab/agents.hpp"
#include "topolab/eib/forward.hpp"
#include "topolab/eib/model.hpp"
#include "topolab/error.hpp"
#include "topolab/protocol.hpp"
#include "topolab/rng.hpp"

namespace topolab::eib {

struct TrainConfig {
  std::size_t samples_per_query = 4;  // S
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t queries_per_batch = 60;  // B
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::FullModel;
  bool use_baseline = true;  // subtract the batch-mean reward

  void validate() const {
    if (samples_per_query == 0 || queries_per_batch == 0 || epochs == 0)
      throw ConfigError("training counts must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  }
};

// Black-box reward for running `task` over `t` with the given dialogue seed.
using RewardFn = std::function<double(const Topology& t, const TaskItem& task, std::uint64_t seed)>;

// Reward = correctness of a synthetic/LLM dialogue under `run`.
inline RewardFn dialogue_reward(std::vector<AgentSpec> agents, RunConfig run) {
  return [agents = std::move(agents), run](const Topology& t, const TaskItem& task, std::uint64_t seed) {
    RunConfig cfg = run;
    cfg.seed = seed;
    return run_dialogue(t, agents, task, cfg).correct ? 1.0 : 0.0;
  };
}

struct SampledRollout {
  Topology topology;
  double reward;
};

// Surrogate (1/S) sum_s (phi_s - b) log P(G_s) differentiated w.r.t. M_final.
inline Eigen::MatrixXd surrogate_grad(const EdgeProbs& probs, std::span<const SampledRollout> rollouts,
                                      double baseline) {
  const auto N = static_cast<Eigen::Index>(probs.n());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(N, N);
  for (const auto& r : rollouts) g += (r.reward - baseline) * log_prob_grad(probs, r.topology);
  return g / static_cast<double>(rollouts.size());
}

inline double surrogate_value(const EdgeProbs& probs, std::span<const SampledRollout> rollouts, double baseline) {
  double v = 0.0;
  for (const auto& r : rollouts) v += (r.reward - baseline) * log_prob(probs, r.topology);
  return v / static_cast<double>(rollouts.size());
}

struct StepStats {
  double mean_reward = 0.0;
  double grad_norm = 0.0;
  std::array<double, 2> mean_alpha{0.0, 0.0};
};

struct Optimizer {
  EibModel velocity;
};

inline Optimizer make_optimizer(const EibModel& model) { return {zeros_like(model)}; }

namespace detail {

inline std::uint64_t rollout_key(std::uint64_t step, const TaskItem& task, std::size_t sample) {
  return derive_seed(step, {fnv1a64(task.id), sample});
}

}  // namespace detail

// One REINFORCE update over `batch`: forward, S sampled topologies per
// query, black-box rewards, batch-mean baseline, exact reverse-mode gradient,
// SGD with momentum (ascent).
inline StepStats policy_gradient_step(EibModel& model, Optimizer& opt, std::span<const AgentSpec> agents,
                                      std::span<const TaskItem> batch, const RewardFn& env, const TrainConfig& cfg,
                                      std::uint64_t step) {
  cfg.validate();
  if (batch.empty()) throw InvalidArgument("training batch is empty");
  struct QueryState {
    Inputs in;
    ForwardCache cache;
    std::vector<SampledRollout> rollouts;
  };
  std::vector<QueryState> qs;
  qs.reserve(batch.size());
  double reward_sum = 0.0;
  StepStats stats;
  for (const auto& task : batch) {
    QueryState q{encode_inputs(model, agents, task), {}, {}};
    q.cache = forward(model, q.in);
    stats.mean_alpha[0] += q.cache.gate.alpha[0];
    stats.mean_alpha[1] += q.cache.gate.alpha[1];
    for (std::size_t s = 0; s < cfg.samples_per_query; ++s) {
      const std::uint64_t key = detail::rollout_key(step, task, s);
      Stream rng(cfg.seed, {key, 0});
      Topology t = sample_topology(q.cache.m_final, rng);
      const double r = env(t, task, derive_seed(cfg.seed, {key, 1}));
      reward_sum += r;
      q.rollouts.push_back({std::move(t), r});
    }
    qs.push_back(std::move(q));
  }
  const double total = static_cast<double>(batch.size() * cfg.samples_per_query);
  stats.mean_reward = reward_sum / total;
  stats.mean_alpha[0] /= static_cast<double>(batch.size());
  stats.mean_alpha[1] /= static_cast<double>(batch.size());
  const double baseline = cfg.use_baseline ? stats.mean_reward : 0.0;

  EibModel grads = zeros_like(model);
  for (const auto& q : qs)
    backward(model, q.in, q.cache, surrogate_grad(q.cache.m_final, q.rollouts, baseline), grads);
  double sq = 0.0;
  for_each_tensor(grads, [&](auto& t) {
    t /= static_cast<double>(batch.size());
    sq += t.squaredNorm();
  });
  stats.grad_norm = std::sqrt(sq);
  if (!std::isfinite(stats.grad_norm))
    throw NonFiniteGradient("non-finite policy gradient at step " + std::to_string(step));

  for_each_tensor_pair(opt.velocity, grads, [&](auto& v, const auto& g) { v = cfg.momentum * v + g; });
  for_each_tensor_pair(model, opt.velocity, [&](auto& p, const auto& v) { p += cfg.learning_rate * v; });
  return stats;
}

// Runs cfg.epochs passes over `tasks` in batches of cfg.queries_per_batch.
inline std::vector<StepStats> train(EibModel& model, std::span<const AgentSpec> agents, std::span<const TaskItem> tasks,
                                    const RewardFn& env, const TrainConfig& cfg,
                                    const std::function<void(std::size_t, const StepStats&)>& on_step = {}) {
  cfg.validate();
  if (tasks.empty()) throw InvalidArgument("training task set is empty");
  model.ablation = cfg.ablation;
  Optimizer opt = make_optimizer(model);
  std::vector<StepStats> log;
  std::size_t step = 0;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    for (std::size_t start = 0; start < tasks.size(); start += cfg.queries_per_batch) {
      const std::size_t len = std::min(cfg.queries_per_batch, tasks.size() - start);
      log.push_back(policy_gradient_step(model, opt, agents, tasks.subspan(start, len), env, cfg, step));
      if (on_step) on_step(step, log.back());
      ++step;
    }
  }
  return log;
}

struct DesignResult {
  Topology topology;
  std::array<double, 2> alpha;
  EdgeProbs m_final;
};

inline DesignResult design_topology(const EibModel& model, std::span<const AgentSpec> agents, const TaskItem& task,
                                    Stream& rng) {
  const auto in = encode_inputs(model, agents, task);
  const auto cache = forward(model, in);
  return {sample_topology(cache.m_final, rng), cache.gate.alpha, cache.m_final};
}

}  // namespace topolab::eib
