#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "topolab/causal.hpp"
#include "topolab/exact.hpp"

using namespace topolab;

namespace {

TaskItem task(std::size_t k, AnswerIndex gold, std::string id = "q") {
  TaskItem t;
  t.id = std::move(id);
  t.question = "Question " + t.id;
  t.alphabet_size = k;
  t.gold = gold;
  return t;
}

std::vector<AgentSpec> agents_with(std::vector<std::pair<double, double>> params) {
  std::vector<AgentSpec> out;
  for (std::size_t i = 0; i < params.size(); ++i)
    out.push_back({i, "Agent " + std::to_string(i), params[i].first, params[i].second});
  return out;
}

// Independent oracle: recursive refinement of the shared uniform of every
// (round, agent) cell into slices on which both processes answer constantly.
// The agent rule is re-derived from its definition here.
double brute_flip(const Topology& t, const std::vector<AgentSpec>& agents, const TaskItem& tk, std::size_t rounds,
                  const Aggregation& agg, std::optional<Intervention> iv) {
  const std::size_t n = t.n(), k = tk.alphabet_size;
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t r = 0; r < rounds; ++r)
    for (std::size_t i = 0; i < n; ++i) cells.push_back({r, i});  // canonical order is topological
  using Grid = std::vector<std::vector<std::size_t>>;
  Grid orig(rounds, std::vector<std::size_t>(n)), cf = orig;
  auto dist = [&](const Grid& g, std::size_t r, std::size_t i) {
    std::vector<double> counts(k, 0.0);
    double m = 0;
    for (std::size_t j = 0; j < i; ++j)
      if (t.has_edge(i, j)) counts[g[r][j]] += 1, m += 1;
    if (r > 0) counts[g[r - 1][i]] += 1, m += 1;
    std::vector<double> p(k);
    for (std::size_t a = 0; a < k; ++a) {
      const double prior = a == tk.gold ? agents[i].competence : (1 - agents[i].competence) / (k - 1);
      p[a] = m == 0 ? prior : (1 - agents[i].social_weight) * prior + agents[i].social_weight * counts[a] / m;
    }
    return p;
  };
  auto cuts = [](const std::vector<double>& p) {
    std::vector<double> c{0.0};
    double acc = 0;
    for (double x : p) c.push_back(acc += x);
    return c;
  };
  auto pick = [](const std::vector<double>& p, double u) {
    double acc = 0;
    std::size_t last = 0;
    for (std::size_t a = 0; a < p.size(); ++a) {
      if (p[a] <= 0) continue;
      acc += p[a];
      last = a;
      if (u < acc) return a;
    }
    return last;
  };
  auto final_of = [&](const std::vector<std::size_t>& row) {
    return aggregate(row, agg, tk, topological_sort(t));
  };
  const AnswerIndex forced = iv ? apply_intervention(*iv, tk).answer : kNoAnswer;
  std::function<double(std::size_t)> rec = [&](std::size_t c) -> double {
    if (c == cells.size()) return (final_of(orig.back()) == tk.gold) != (final_of(cf.back()) == tk.gold) ? 1.0 : 0.0;
    const auto [r, i] = cells[c];
    const auto po = dist(orig, r, i), pc = dist(cf, r, i);
    auto bounds = cuts(po);
    const auto bc = cuts(pc);
    bounds.insert(bounds.end(), bc.begin(), bc.end());
    bounds.push_back(1.0);
    std::sort(bounds.begin(), bounds.end());
    double total = 0;
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
      const double lo = bounds[b], hi = std::min(bounds[b + 1], 1.0);
      if (hi - lo <= 0) continue;
      const double mid = 0.5 * (lo + hi);
      orig[r][i] = pick(po, mid);
      cf[r][i] = (iv && iv->target == i) ? forced : pick(pc, mid);
      total += (hi - lo) * rec(c + 1);
    }
    return total;
  };
  return rec(0);
}

}  // namespace

TEST(Cape, Indicator) {
  EXPECT_EQ(cape(true, true), 0);
  EXPECT_EQ(cape(true, false), 1);
  EXPECT_EQ(cape(false, true), 1);
  EXPECT_EQ(cape(false, false), 0);
}

TEST(Tcte, Examples) {
  std::vector<CapeRecord> zero{{0, 0, 1, 1}, {1, 0, 1, 1}, {2, 0, 1, 1}};
  EXPECT_DOUBLE_EQ(tcte(zero, chain_topology(3)), 0.0);
  std::vector<CapeRecord> c{{0, 1, 1, 0}, {1, 1, 1, 0}, {2, 0, 1, 1}};
  EXPECT_NEAR(tcte(c, chain_topology(3)), (1 + 1 / std::sqrt(2.0)) / 3, 1e-12);
  EXPECT_NEAR(tcte(c, chain_topology(3)), 0.56904, 1e-5);
  std::vector<CapeRecord> both{{0, 1, 1, 0}, {1, 1, 1, 0}};
  EXPECT_DOUBLE_EQ(tcte(both, full_topology(2)), 1.0);
}

TEST(Tcte, IsolatedAgentUsesUnitDegree) {
  std::vector<CapeRecord> c{{0, 1, 1, 0}, {1, 0, 1, 1}};
  EXPECT_DOUBLE_EQ(tcte(c, Topology(2)), 0.5);
}

TEST(Tcte, MissingOrDuplicateAgents) {
  std::vector<CapeRecord> missing{{0, 1, 1, 0}};
  EXPECT_THROW(tcte(missing, chain_topology(2)), InvalidArgument);
  std::vector<CapeRecord> dup{{0, 1, 1, 0}, {0, 1, 1, 0}};
  EXPECT_THROW(tcte(dup, chain_topology(2)), InvalidArgument);
}

TEST(Tcte, AlwaysWithinUnitInterval) {
  Stream rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const auto t = n > 1 ? build_named(RandomKind{rng.uniform()}, n, &rng) : Topology(1);
    std::vector<CapeRecord> c;
    for (std::size_t i = 0; i < n; ++i) {
      const int f = rng.bernoulli(0.5) ? 1 : 0;
      c.push_back({i, f, 1, 1 - f});
    }
    const double v = tcte(c, t);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(CounterfactualPair, CopyingChain) {
  const auto agents = agents_with({{1.0, 0.0}, {0.5, 1.0}});
  RunConfig cfg;
  cfg.rounds = 1;
  cfg.aggregation = LastAgent{};
  const auto pair = run_counterfactual_pair(chain_topology(2), agents, task(4, 0), cfg, {0, ForceError{}});
  EXPECT_TRUE(pair.first.correct);
  EXPECT_FALSE(pair.second.correct);
  EXPECT_EQ(cape(pair), 1);
}

TEST(CounterfactualPair, NoPathToJudgeNoEffect) {
  // Agent 2 is the judge and hears nobody: nothing upstream can matter.
  const auto agents = agents_with({{0.6, 0.5}, {0.6, 0.5}, {0.6, 0.9}});
  const Topology t = Topology(3).with_edge({1, 0});
  RunConfig cfg;
  cfg.aggregation = Judge{2};
  for (std::uint64_t s = 0; s < 200; ++s) {
    cfg.seed = s;
    const auto pair = run_counterfactual_pair(t, agents, task(4, 1), cfg, {0, ForceError{}});
    EXPECT_EQ(cape(pair), 0);
  }
  EXPECT_DOUBLE_EQ(exact_flip_probability(t, agents, task(4, 1), cfg, Intervention{0, ForceError{}}), 0.0);
}

TEST(QueryEffect, SingleAgentSystem) {
  const auto agents = agents_with({{0.7, 0.5}});
  const std::vector<TaskItem> tasks{task(4, 0, "a"), task(4, 1, "b"), task(4, 2, "c")};
  RunConfig cfg;
  cfg.seed = 4;
  const auto row = evaluate_topology(Topology(1), agents, tasks, cfg, PropagationKind::ErrorPropagation);
  double mean_cape = 0;
  for (const auto& tk : tasks) mean_cape += query_effect(Topology(1), agents, tk, cfg, PropagationKind::ErrorPropagation).capes[0].flipped;
  EXPECT_DOUBLE_EQ(row.tcte, mean_cape / 3);
  EXPECT_DOUBLE_EQ(row.topology_sparsity, 0.0);
}

TEST(Sweep, ErrorRowsOrderedAndStartAtFull) {
  const auto agents = uniform_agents(5, 0.9, 0.7);
  std::vector<TaskItem> tasks;
  for (int i = 0; i < 20; ++i) tasks.push_back(task(4, static_cast<AnswerIndex>(i % 4), "t" + std::to_string(i)));
  RunConfig cfg;
  cfg.seed = 2;
  Stream rng(2);
  const auto rep = sweep_error_propagation(agents, tasks, cfg, sparsify_path(5, rng));
  ASSERT_EQ(rep.rows.size(), 7u);
  for (std::size_t r = 1; r < rep.rows.size(); ++r)
    EXPECT_LT(rep.rows[r - 1].topology_sparsity, rep.rows[r].topology_sparsity);
  const auto full = evaluate_topology(full_topology(5), agents, tasks, cfg, PropagationKind::ErrorPropagation);
  EXPECT_DOUBLE_EQ(rep.rows.front().topology_sparsity, 0.0);
  EXPECT_DOUBLE_EQ(rep.rows.front().tcte, full.tcte);
  for (const auto& row : rep.rows) {
    EXPECT_GE(row.tcte, 0.0);
    EXPECT_LE(row.tcte, 1.0);
    EXPECT_EQ(row.n_queries, 20u);
  }
}

TEST(Sweep, InsightLastRowIsFull) {
  const auto agents = uniform_agents(4, 0.6, 0.7);
  std::vector<TaskItem> tasks;
  for (int i = 0; i < 10; ++i) tasks.push_back(task(4, 0, "t" + std::to_string(i)));
  RunConfig cfg;
  Stream rng(5);
  const auto rep = sweep_insight_propagation(agents, tasks, cfg, densify_path(4, rng));
  const auto full = evaluate_topology(full_topology(4), agents, tasks, cfg, PropagationKind::InsightPropagation);
  EXPECT_DOUBLE_EQ(rep.rows.front().tcte, full.tcte);  // sorted by sparsity: densest first
}

TEST(Sweep, WrongDirectionOrEmptyTasks) {
  const auto agents = uniform_agents(4, 0.6, 0.7);
  std::vector<TaskItem> tasks{task(4, 0)};
  Stream rng(1);
  const auto dense = densify_path(4, rng);
  EXPECT_THROW(sweep_error_propagation(agents, tasks, RunConfig{}, dense), InvalidArgument);
  Stream rng2(1);
  EXPECT_THROW(sweep_insight_propagation(agents, tasks, RunConfig{}, sparsify_path(4, rng2)), InvalidArgument);
  EXPECT_THROW(sweep_insight_propagation(agents, {}, RunConfig{}, dense), InvalidArgument);
}

TEST(Sweep, NoSocialInfluenceNoPropagationUnderJudge) {
  auto agents = uniform_agents(4, 0.5, 0.0);
  RunConfig cfg;
  cfg.aggregation = Judge{3};
  Stream rng(9);
  const auto path = densify_path(4, rng);
  for (std::uint64_t s = 0; s < 30; ++s) {
    cfg.seed = s;
    for (const auto& t : path.steps) {
      const auto q = query_effect(t, agents, task(4, 1, "x" + std::to_string(s)), cfg,
                                  PropagationKind::InsightPropagation);
      for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(q.capes[i].flipped, 0);
    }
  }
  for (const auto& t : path.steps)
    for (std::size_t i = 0; i < 3; ++i)
      EXPECT_DOUBLE_EQ(exact_flip_probability(t, agents, task(4, 1), cfg, Intervention{i, ForceAnswer{}}), 0.0);
}

TEST(Baselines, TwoKindsPopulated) {
  const auto agents = uniform_agents(4, 0.8, 0.7);
  std::vector<TaskItem> tc, ti;
  for (int i = 0; i < 10; ++i) {
    tc.push_back(task(4, 0, "c" + std::to_string(i)));
    ti.push_back(task(4, 1, "i" + std::to_string(i)));
  }
  const std::vector<TopologyKind> kinds{FullKind{}, ChainKind{}};
  const auto rows = baseline_suite(agents, tc, ti, RunConfig{}, kinds);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].kind, "full");
  EXPECT_EQ(rows[1].kind, "chain");
  EXPECT_DOUBLE_EQ(rows[1].sparsity, 1.0 / 2.0);
  const auto again = baseline_suite(agents, tc, ti, RunConfig{}, kinds);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_EQ(rows[r].error_tcte, again[r].error_tcte);
    EXPECT_EQ(rows[r].insight_tcte, again[r].insight_tcte);
    EXPECT_EQ(rows[r].accuracy, again[r].accuracy);
  }
  EXPECT_THROW(baseline_suite(agents, tc, ti, RunConfig{}, {}), InvalidArgument);
}

TEST(ExactFlip, CopyingChainConditionedOnCorrect) {
  const auto agents = agents_with({{0.9, 0.0}, {0.5, 1.0}});
  RunConfig cfg;
  cfg.rounds = 1;
  cfg.aggregation = LastAgent{};
  EXPECT_DOUBLE_EQ(exact_flip_probability(chain_topology(2), agents, task(4, 0), cfg, Intervention{0, ForceError{}},
                                          FlipCondition::OriginallyCorrect),
                   1.0);
  // Unconditioned: the pair flips exactly when agent 0 was naturally right.
  EXPECT_NEAR(exact_flip_probability(chain_topology(2), agents, task(4, 0), cfg, Intervention{0, ForceError{}}), 0.9,
              1e-12);
}

TEST(ExactFlip, DeafReceiverNeverFlips) {
  const auto agents = agents_with({{0.9, 0.0}, {0.5, 0.0}});
  RunConfig cfg;
  cfg.rounds = 1;
  cfg.aggregation = LastAgent{};
  EXPECT_DOUBLE_EQ(exact_flip_probability(chain_topology(2), agents, task(4, 0), cfg, Intervention{0, ForceError{}}),
                   0.0);
}

TEST(ExactFlip, NaturalCustomIsZero) {
  const auto agents = agents_with({{1.0, 0.0}, {0.6, 0.7}, {0.6, 0.7}});
  RunConfig cfg;
  cfg.rounds = 2;
  EXPECT_DOUBLE_EQ(
      exact_flip_probability(full_topology(3), agents, task(2, 1), cfg, Intervention{0, Custom{1, ""}}), 0.0);
  EXPECT_DOUBLE_EQ(exact_flip_probability(full_topology(3), agents, task(2, 1), cfg, std::nullopt), 0.0);
}

TEST(ExactFlip, TractabilityGuard) {
  const auto agents = uniform_agents(7, 0.5, 0.5);
  RunConfig cfg;
  EXPECT_THROW(exact_flip_probability(full_topology(7), agents, task(4, 0), cfg, Intervention{0, ForceError{}}),
               TractabilityError);
  cfg.rounds = 4;
  EXPECT_THROW(exact_flip_probability(full_topology(2), uniform_agents(2, 0.5, 0.5), task(2, 0), cfg,
                                      Intervention{0, ForceError{}}),
               TractabilityError);
}

TEST(ExactFlip, ConditionWithZeroMassIsAnError) {
  const auto agents = agents_with({{1.0, 0.0}, {1.0, 0.0}});
  RunConfig cfg;
  cfg.rounds = 1;
  EXPECT_THROW(exact_flip_probability(chain_topology(2), agents, task(2, 0), cfg, Intervention{0, ForceError{}},
                                      FlipCondition::OriginallyIncorrect),
               InvalidArgument);
}

TEST(ExactFlip, MatchesIndependentEnumeration) {
  Stream rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + rng.below(3);
    const std::size_t k = 2 + rng.below(2);
    const std::size_t rounds = 1 + rng.below(2);
    const auto t = build_named(RandomKind{rng.uniform()}, n, &rng);
    std::vector<AgentSpec> agents;
    for (std::size_t i = 0; i < n; ++i) agents.push_back({i, "a", rng.uniform(), rng.uniform()});
    const auto tk = task(k, rng.below(k));
    RunConfig cfg;
    cfg.rounds = rounds;
    const int agg = static_cast<int>(rng.below(3));
    cfg.aggregation = agg == 0 ? Aggregation{MajorityVote{}} : agg == 1 ? Aggregation{LastAgent{}} : Aggregation{Judge{rng.below(n)}};
    const Intervention iv{rng.below(n), rng.bernoulli(0.5) ? InterventionMode{ForceError{}} : InterventionMode{ForceAnswer{}}};
    const double exact = exact_flip_probability(t, agents, tk, cfg, iv);
    const double oracle = brute_flip(t, agents, tk, rounds, cfg.aggregation, iv);
    EXPECT_NEAR(exact, oracle, 1e-12) << "trial " << trial;
  }
}

TEST(ExactFlip, MonteCarloAgreesOnSmallInstance) {
  const auto agents = agents_with({{0.7, 0.3}, {0.6, 0.6}, {0.8, 0.5}});
  RunConfig cfg;
  cfg.rounds = 2;
  const auto tk = task(2, 0);
  const Intervention iv{0, ForceError{}};
  const double p = exact_flip_probability(full_topology(3), agents, tk, cfg, iv);
  const std::size_t trials = 10000;
  std::size_t flips = 0;
  for (std::size_t s = 0; s < trials; ++s) {
    cfg.seed = derive_seed(123, {s});
    flips += static_cast<std::size_t>(cape(run_counterfactual_pair(full_topology(3), agents, tk, cfg, iv)));
  }
  const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / trials);
  EXPECT_NEAR(static_cast<double>(flips) / trials, p, 3 * se);
}

TEST(ExactFlip, StarLeavesAreExchangeable) {
  const auto agents = uniform_agents(3, 0.7, 0.6);
  RunConfig cfg;
  cfg.rounds = 2;
  const auto t = build_named(StarKind{}, 3);
  EXPECT_NEAR(exact_flip_probability(t, agents, task(2, 0), cfg, Intervention{1, ForceError{}}),
              exact_flip_probability(t, agents, task(2, 0), cfg, Intervention{2, ForceError{}}), 1e-14);
}
