#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "topolab/topology.hpp"

using namespace topolab;

namespace {

std::set<std::pair<std::size_t, std::size_t>> edge_set(const Topology& t) {
  std::set<std::pair<std::size_t, std::size_t>> s;
  for (const auto& e : t.edges()) s.insert({e.receiver, e.sender});
  return s;
}

// Independent acyclicity check: DFS for a back edge over the sender -> receiver graph.
bool has_cycle(const Topology& t) {
  const std::size_t n = t.n();
  std::vector<int> color(n, 0);
  std::function<bool(std::size_t)> visit = [&](std::size_t u) {
    color[u] = 1;
    for (std::size_t v : t.out_neighbors(u)) {
      if (color[v] == 1) return true;
      if (color[v] == 0 && visit(v)) return true;
    }
    color[u] = 2;
    return false;
  };
  for (std::size_t u = 0; u < n; ++u)
    if (color[u] == 0 && visit(u)) return true;
  return false;
}

}  // namespace

TEST(BuildNamed, ChainOfThree) {
  EXPECT_EQ(edge_set(build_named(ChainKind{}, 3)), (std::set<std::pair<std::size_t, std::size_t>>{{1, 0}, {2, 1}}));
}

TEST(BuildNamed, StarOfFour) {
  EXPECT_EQ(edge_set(build_named(StarKind{}, 4)),
            (std::set<std::pair<std::size_t, std::size_t>>{{1, 0}, {2, 0}, {3, 0}}));
}

TEST(BuildNamed, LayeredThreeOverSix) {
  EXPECT_EQ(edge_set(build_named(LayeredKind{3}, 6)),
            (std::set<std::pair<std::size_t, std::size_t>>{
                {2, 0}, {2, 1}, {3, 0}, {3, 1}, {4, 2}, {4, 3}, {5, 2}, {5, 3}}));
}

TEST(BuildNamed, LayeredRemainderGoesToEarlyLayers) {
  // 7 agents in 3 layers: sizes 3, 2, 2.
  const auto t = build_named(LayeredKind{3}, 7);
  EXPECT_EQ(t.in_neighbors(3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(t.in_neighbors(2).empty());
  EXPECT_EQ(t.in_neighbors(5), (std::vector<std::size_t>{3, 4}));
}

TEST(BuildNamed, RandomDensityOneIsFull) {
  Stream rng(7);
  EXPECT_EQ(build_named(RandomKind{1.0}, 4, &rng), full_topology(4));
}

TEST(BuildNamed, RandomDensityZeroIsChain) {
  Stream rng(7);
  EXPECT_EQ(build_named(RandomKind{0.0}, 5, &rng), chain_topology(5));
}

TEST(BuildNamed, TreeParents) {
  const auto t = build_named(TreeKind{2}, 7);
  for (std::size_t i = 1; i < 7; ++i) EXPECT_EQ(t.in_neighbors(i), (std::vector<std::size_t>{(i - 1) / 2}));
}

TEST(BuildNamed, InvalidParameters) {
  EXPECT_THROW(build_named(LayeredKind{4}, 3), InvalidArgument);
  EXPECT_THROW(build_named(LayeredKind{0}, 3), InvalidArgument);
  Stream rng(1);
  EXPECT_THROW(build_named(RandomKind{1.5}, 3, &rng), InvalidArgument);
  EXPECT_THROW(build_named(RandomKind{-0.1}, 3, &rng), InvalidArgument);
  EXPECT_THROW(build_named(TreeKind{0}, 3), InvalidArgument);
  EXPECT_THROW(build_named(FullKind{}, 0), InvalidArgument);
}

TEST(BuildNamed, RandomEdgeCountMeanWithinThreeStandardErrors) {
  const std::size_t n = 6;
  const double p = 0.3;
  const std::size_t trials = 10000;
  const double free_pairs = static_cast<double>(max_edges(n) - (n - 1));
  double sum = 0.0;
  for (std::size_t s = 0; s < trials; ++s) {
    Stream rng(s);
    sum += static_cast<double>(build_named(RandomKind{p}, n, &rng).edge_count());
  }
  const double mean = sum / trials;
  const double expected = p * free_pairs + (n - 1);
  const double se = std::sqrt(free_pairs * p * (1 - p) / trials);
  EXPECT_NEAR(mean, expected, 3 * se);
}

TEST(ParseKind, RoundTripsLabels) {
  for (const char* s : {"full", "chain", "star", "layered:3", "random:0.5", "tree:2"})
    EXPECT_NO_THROW(parse_kind(s)) << s;
  EXPECT_THROW(parse_kind("ring"), InvalidArgument);
  EXPECT_THROW(parse_kind("layered:x"), InvalidArgument);
}

TEST(Topology, RejectsUpperTriangularEdges) {
  Topology t(3);
  EXPECT_THROW(t.with_edge({0, 1}), InvalidArgument);
  EXPECT_THROW(t.with_edge({1, 1}), InvalidArgument);
  EXPECT_THROW(t.with_edge({3, 0}), InvalidArgument);
}

TEST(SweepPath, SparsifyLengthAndEndpoints) {
  Stream rng(11);
  const auto path = sparsify_path(6, rng);
  ASSERT_EQ(path.steps.size(), 11u);
  EXPECT_EQ(path.steps.front(), full_topology(6));
  EXPECT_EQ(path.steps.back(), chain_topology(6));
  EXPECT_DOUBLE_EQ(sparsity(path.steps.front()), 0.0);
  EXPECT_NEAR(sparsity(path.steps.back()), 2.0 / 3.0, 1e-15);
}

TEST(SweepPath, TwoAgentsIsSingleStep) {
  Stream rng(1);
  EXPECT_EQ(sparsify_path(2, rng).steps.size(), 1u);
  Stream rng2(1);
  EXPECT_EQ(densify_path(2, rng2).steps.size(), 1u);
}

TEST(SweepPath, DensifyThreeAgents) {
  Stream rng(5);
  const auto path = densify_path(3, rng);
  ASSERT_EQ(path.steps.size(), 2u);
  EXPECT_EQ(path.steps[0].edge_count(), 2u);
  EXPECT_EQ(path.steps[1].edge_count(), 3u);
}

TEST(SweepPath, StepsDifferByOneEdgeAndKeepBackbone) {
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    for (auto dir : {SweepDirection::Sparsify, SweepDirection::Densify}) {
      Stream rng(seed);
      const auto path = dir == SweepDirection::Sparsify ? sparsify_path(7, rng) : densify_path(7, rng);
      EXPECT_EQ(path.direction, dir);
      for (std::size_t s = 0; s < path.steps.size(); ++s) {
        for (std::size_t i = 1; i < 7; ++i) EXPECT_TRUE(path.steps[s].has_edge(i, i - 1));
        if (s == 0) continue;
        const auto a = edge_set(path.steps[s - 1]), b = edge_set(path.steps[s]);
        std::vector<std::pair<std::size_t, std::size_t>> diff;
        std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
        EXPECT_EQ(diff.size(), 1u);
      }
    }
}

TEST(SweepPath, DeterministicPerSeed) {
  Stream a(99), b(99);
  EXPECT_EQ(sparsify_path(6, a).steps, sparsify_path(6, b).steps);
}

TEST(SweepPath, ReversedDensifyIsValidSparsify) {
  Stream rng(3);
  auto path = densify_path(5, rng);
  std::reverse(path.steps.begin(), path.steps.end());
  EXPECT_EQ(path.steps.front(), full_topology(5));
  EXPECT_EQ(path.steps.back(), chain_topology(5));
  for (std::size_t s = 1; s < path.steps.size(); ++s)
    EXPECT_EQ(path.steps[s - 1].edge_count(), path.steps[s].edge_count() + 1);
}

TEST(TopologicalSort, Examples) {
  EXPECT_EQ(topological_sort(chain_topology(3)), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(topological_sort(Topology(3).with_edge({2, 0}).with_edge({2, 1})), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(topological_sort(full_topology(4)), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(TopologicalSort, KahnReportsCycles) {
  // 0 <- 1 <- 2 <- 0 expressed as predecessor lists.
  std::vector<std::vector<std::size_t>> preds{{1}, {2}, {0}};
  EXPECT_THROW(detail::kahn_order(preds), CycleError);
  std::vector<std::vector<std::size_t>> ok{{}, {0}, {0, 1}};
  EXPECT_EQ(detail::kahn_order(ok), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(TopologicalSort, MinIndexTieBreak) {
  std::vector<std::vector<std::size_t>> preds{{2}, {}, {}};
  EXPECT_EQ(detail::kahn_order(preds), (std::vector<std::size_t>{1, 2, 0}));
}

TEST(Sparsity, Examples) {
  EXPECT_DOUBLE_EQ(sparsity(full_topology(6)), 0.0);
  EXPECT_NEAR(sparsity(chain_topology(6)), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(sparsity(Topology(6)), 1.0);
  EXPECT_THROW(sparsity(Topology(1)), InvalidArgument);
}

TEST(Degree, Examples) {
  EXPECT_EQ(degree(chain_topology(3), 1), 2u);
  EXPECT_EQ(degree(chain_topology(3), 0), 1u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(degree(full_topology(4), i), 3u);
  EXPECT_THROW(degree(chain_topology(3), 3), InvalidArgument);
}

TEST(Degree, HandshakeOnRandomTopologies) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    Stream rng(s);
    const auto t = build_named(RandomKind{0.4}, 7, &rng);
    std::size_t total = 0;
    for (std::size_t i = 0; i < 7; ++i) total += degree(t, i);
    EXPECT_EQ(total, 2 * t.edge_count());
  }
}

TEST(Topology, GeneratedGraphsAreAcyclic) {
  for (std::uint64_t s = 0; s < 100000; ++s) {
    Stream rng(s);
    const auto t = build_named(RandomKind{rng.uniform()}, 2 + s % 7, &rng);
    ASSERT_FALSE(has_cycle(t)) << "seed " << s;
  }
}

TEST(TopologyJson, RoundTripAndSortedEdges) {
  Stream rng(4);
  const auto t = build_named(RandomKind{0.5}, 6, &rng);
  const auto j = to_json(t);
  EXPECT_EQ(topology_from_json(j), t);
  EXPECT_EQ(topology_from_json(nlohmann::json::parse(j.dump())).edges(), t.edges());
  const auto edges = j.at("edges").get<std::vector<std::vector<std::size_t>>>();
  EXPECT_TRUE(std::is_sorted(edges.begin(), edges.end()));
  EXPECT_EQ(to_json(chain_topology(3)).dump(), R"({"edges":[[1,0],[2,1]],"n":3})");
}

TEST(TopologyJson, RejectsInvalidEdges) {
  EXPECT_THROW(topology_from_json(nlohmann::json::parse(R"({"n":3,"edges":[[0,1]]})")), InvalidArgument);
  EXPECT_THROW(topology_from_json(nlohmann::json::parse(R"({"n":0,"edges":[]})")), InvalidArgument);
}
