#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "topolab/error.hpp"
#include "topolab/rng.hpp"

namespace topolab {

// A directed edge as (receiver, sender): the receiver reads the sender's output.
struct Edge {
  std::size_t receiver;
  std::size_t sender;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Communication graph over a canonical agent order. adj(i, j) means agent i
// receives from agent j; only j < i is representable, so every Topology is a
// DAG by construction.
class Topology {
 public:
  explicit Topology(std::size_t n) : n_(n), adj_(n * n, 0) {
    if (n == 0) throw InvalidArgument("topology needs at least one agent");
  }

  Topology(std::size_t n, const std::vector<Edge>& edges) : Topology(n) {
    for (const Edge& e : edges) set(e, true);
  }

  std::size_t n() const noexcept { return n_; }

  bool has_edge(std::size_t receiver, std::size_t sender) const {
    check_index(receiver);
    check_index(sender);
    return adj_[receiver * n_ + sender] != 0;
  }

  std::size_t edge_count() const noexcept {
    return static_cast<std::size_t>(std::count(adj_.begin(), adj_.end(), std::uint8_t{1}));
  }

  // Lexicographically sorted (receiver, sender) pairs.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (adj_[i * n_ + j]) out.push_back({i, j});
    return out;
  }

  // Senders agent i receives from, ascending.
  std::vector<std::size_t> in_neighbors(std::size_t i) const {
    check_index(i);
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < i; ++j)
      if (adj_[i * n_ + j]) out.push_back(j);
    return out;
  }

  std::vector<std::size_t> out_neighbors(std::size_t j) const {
    check_index(j);
    std::vector<std::size_t> out;
    for (std::size_t i = j + 1; i < n_; ++i)
      if (adj_[i * n_ + j]) out.push_back(i);
    return out;
  }

  Topology with_edge(Edge e) const {
    Topology t = *this;
    t.set(e, true);
    return t;
  }

  Topology without_edge(Edge e) const {
    Topology t = *this;
    t.set(e, false);
    return t;
  }

  friend bool operator==(const Topology&, const Topology&) = default;

 private:
  void check_index(std::size_t i) const {
    if (i >= n_) throw InvalidArgument("agent index " + std::to_string(i) + " out of range for n=" + std::to_string(n_));
  }

  void set(Edge e, bool present) {
    check_index(e.receiver);
    check_index(e.sender);
    if (e.sender >= e.receiver)
      throw InvalidArgument("edge (" + std::to_string(e.receiver) + "<-" + std::to_string(e.sender) +
                            ") violates the canonical order: sender must precede receiver");
    adj_[e.receiver * n_ + e.sender] = present ? 1 : 0;
  }

  std::size_t n_;
  std::vector<std::uint8_t> adj_;
};

// ---------------------------------------------------------------------------
// Named families

struct FullKind {};
struct ChainKind {};
struct StarKind {};
struct LayeredKind {
  std::size_t layers;
};
struct RandomKind {
  double density;
};
struct TreeKind {
  std::size_t branching;
};

using TopologyKind = std::variant<FullKind, ChainKind, StarKind, LayeredKind, RandomKind, TreeKind>;

inline std::string kind_label(const TopologyKind& kind) {
  struct Visitor {
    std::string operator()(FullKind) const { return "full"; }
    std::string operator()(ChainKind) const { return "chain"; }
    std::string operator()(StarKind) const { return "star"; }
    std::string operator()(LayeredKind k) const { return "layered(" + std::to_string(k.layers) + ")"; }
    std::string operator()(RandomKind k) const {
      std::string s = std::to_string(k.density);
      s.erase(s.find_last_not_of('0') + 1);
      if (!s.empty() && s.back() == '.') s.pop_back();
      return "random(" + s + ")";
    }
    std::string operator()(TreeKind k) const { return "tree(" + std::to_string(k.branching) + ")"; }
  };
  return std::visit(Visitor{}, kind);
}

// Parses "full", "chain", "star", "layered:3", "random:0.5", "tree:2".
inline TopologyKind parse_kind(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  const std::optional<std::string> arg =
      colon == std::string::npos ? std::nullopt : std::optional<std::string>(text.substr(colon + 1));
  auto need_arg = [&]() -> const std::string& {
    if (!arg || arg->empty()) throw InvalidArgument("topology kind '" + name + "' needs a parameter, e.g. " + name + ":2");
    return *arg;
  };
  try {
    if (name == "full" || name == "complete") return FullKind{};
    if (name == "chain") return ChainKind{};
    if (name == "star") return StarKind{};
    if (name == "layered" || name == "tree") {
      const auto v = std::stoul(need_arg());
      if (v == 0) throw InvalidArgument("topology kind '" + text + "' needs a positive parameter");
      if (name == "layered") return LayeredKind{v};
      return TreeKind{v};
    }
    if (name == "random") {
      const double p = std::stod(need_arg());
      if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("edge probability in '" + text + "' must lie in [0, 1]");
      return RandomKind{p};
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const InvalidArgument*>(&e)) throw;
    throw InvalidArgument("bad parameter in topology kind '" + text + "'");
  }
  throw InvalidArgument("unknown topology kind '" + name + "'");
}

inline Topology full_topology(std::size_t n) {
  Topology t(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) t = t.with_edge({i, j});
  return t;
}

inline Topology chain_topology(std::size_t n) {
  std::vector<Edge> e;
  for (std::size_t i = 1; i < n; ++i) e.push_back({i, i - 1});
  return Topology(n, e);
}

// Builds the canonical instance of a named family. Random draws one Bernoulli
// per non-backbone pair from `rng`, in (receiver, sender) lexicographic order.
inline Topology build_named(const TopologyKind& kind, std::size_t n, Stream* rng = nullptr) {
  if (n == 0) throw InvalidArgument("topology needs at least one agent");
  struct Visitor {
    std::size_t n;
    Stream* rng;
    Topology operator()(FullKind) const { return full_topology(n); }
    Topology operator()(ChainKind) const { return chain_topology(n); }
    Topology operator()(StarKind) const {
      std::vector<Edge> e;
      for (std::size_t i = 1; i < n; ++i) e.push_back({i, 0});
      return Topology(n, e);
    }
    Topology operator()(LayeredKind k) const {
      if (k.layers == 0 || k.layers > n)
        throw InvalidArgument("layered topology needs 1 <= layers <= n (layers=" + std::to_string(k.layers) +
                              ", n=" + std::to_string(n) + ")");
      // Near-equal contiguous layers; the first (n % layers) layers get one extra agent.
      std::vector<std::size_t> start(k.layers + 1, 0);
      const std::size_t base = n / k.layers, extra = n % k.layers;
      for (std::size_t l = 0; l < k.layers; ++l) start[l + 1] = start[l] + base + (l < extra ? 1 : 0);
      std::vector<Edge> e;
      for (std::size_t l = 1; l < k.layers; ++l)
        for (std::size_t i = start[l]; i < start[l + 1]; ++i)
          for (std::size_t j = start[l - 1]; j < start[l]; ++j) e.push_back({i, j});
      return Topology(n, e);
    }
    Topology operator()(RandomKind k) const {
      if (!(k.density >= 0.0 && k.density <= 1.0))
        throw InvalidArgument("random topology density must lie in [0, 1]");
      if (rng == nullptr) throw InvalidArgument("random topology needs a seeded stream");
      Topology t = chain_topology(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j + 1 < i; ++j)
          if (rng->bernoulli(k.density)) t = t.with_edge({i, j});
      return t;
    }
    Topology operator()(TreeKind k) const {
      if (k.branching == 0) throw InvalidArgument("tree topology needs branching >= 1");
      std::vector<Edge> e;
      for (std::size_t i = 1; i < n; ++i) e.push_back({i, (i - 1) / k.branching});
      return Topology(n, e);
    }
  };
  return std::visit(Visitor{n, rng}, kind);
}

// ---------------------------------------------------------------------------
// Sweep paths

enum class SweepDirection { Sparsify, Densify };

struct SweepPath {
  SweepDirection direction;
  std::vector<Topology> steps;
};

namespace detail {

inline std::vector<Edge> non_backbone_pairs(std::size_t n) {
  std::vector<Edge> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j + 1 < i; ++j) out.push_back({i, j});
  return out;
}

}  // namespace detail

// Full -> Chain, removing one uniformly chosen non-backbone edge per step.
inline SweepPath sparsify_path(std::size_t n, Stream& rng) {
  if (n < 2) throw InvalidArgument("sweep paths need n >= 2");
  auto order = detail::non_backbone_pairs(n);
  rng.shuffle(order);
  SweepPath path{SweepDirection::Sparsify, {full_topology(n)}};
  for (const Edge& e : order) path.steps.push_back(path.steps.back().without_edge(e));
  return path;
}

// Chain -> Full, adding one uniformly chosen absent edge per step.
inline SweepPath densify_path(std::size_t n, Stream& rng) {
  if (n < 2) throw InvalidArgument("sweep paths need n >= 2");
  auto order = detail::non_backbone_pairs(n);
  rng.shuffle(order);
  SweepPath path{SweepDirection::Densify, {chain_topology(n)}};
  for (const Edge& e : order) path.steps.push_back(path.steps.back().with_edge(e));
  return path;
}

// ---------------------------------------------------------------------------
// Queries

namespace detail {

// Kahn's algorithm with smallest-index selection. preds[i] lists the agents i
// receives from. Works on arbitrary digraphs so the cycle branch is testable.
inline std::vector<std::size_t> kahn_order(const std::vector<std::vector<std::size_t>>& preds) {
  const std::size_t n = preds.size();
  std::vector<std::size_t> pending(n, 0);
  std::vector<std::vector<std::size_t>> succ(n);
  for (std::size_t i = 0; i < n; ++i) {
    pending[i] = preds[i].size();
    for (std::size_t j : preds[i]) succ.at(j).push_back(i);
  }
  std::vector<bool> done(n, false);
  std::vector<std::size_t> order;
  order.reserve(n);
  while (order.size() < n) {
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!done[i] && pending[i] == 0) {
        pick = i;
        break;
      }
    }
    if (pick == n) throw CycleError("communication graph contains a cycle");
    done[pick] = true;
    order.push_back(pick);
    for (std::size_t s : succ[pick]) --pending[s];
  }
  return order;
}

}  // namespace detail

inline std::vector<std::size_t> topological_sort(const Topology& t) {
  std::vector<std::vector<std::size_t>> preds(t.n());
  for (std::size_t i = 0; i < t.n(); ++i) preds[i] = t.in_neighbors(i);
  return detail::kahn_order(preds);
}

inline std::size_t max_edges(std::size_t n) noexcept { return n * (n - 1) / 2; }

// 1 - |E| / (n(n-1)/2); 0 for Full, 1 for the empty graph.
inline double sparsity(const Topology& t) {
  if (t.n() < 2) throw InvalidArgument("sparsity is undefined for a single agent");
  const std::size_t m = max_edges(t.n());
  return static_cast<double>(m - t.edge_count()) / static_cast<double>(m);
}

// Total degree: in-degree plus out-degree.
inline std::size_t degree(const Topology& t, std::size_t i) {
  if (i >= t.n()) throw InvalidArgument("agent index " + std::to_string(i) + " out of range");
  return t.in_neighbors(i).size() + t.out_neighbors(i).size();
}

// ---------------------------------------------------------------------------
// JSON: {"n": int, "edges": [[receiver, sender], ...]} with sorted edges.

inline nlohmann::json to_json(const Topology& t) {
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : t.edges()) edges.push_back({e.receiver, e.sender});
  return {{"n", t.n()}, {"edges", std::move(edges)}};
}

inline Topology topology_from_json(const nlohmann::json& j) {
  try {
    const auto n = j.at("n").get<std::size_t>();
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw InvalidArgument("topology edge must be [receiver, sender]");
      edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
    }
    return Topology(n, edges);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed topology JSON: ") + e.what());
  }
}

}  // namespace topolab
