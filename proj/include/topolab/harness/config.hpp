#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topolab/agents.hpp"
#include "topolab/eib/model.hpp"
#include "topolab/eib/train.hpp"
#include "topolab/error.hpp"
#include "topolab/harness/tasks.hpp"
#include "topolab/llm_client.hpp"
#include "topolab/protocol.hpp"
#include "topolab/rng.hpp"
#include "topolab/topology.hpp"

namespace topolab::harness {

struct TaskSource {
  std::optional<std::string> path;  // JSON Lines file
  std::size_t synthetic_count = 5000;
  std::size_t synthetic_alphabet = 4;
  std::uint64_t synthetic_seed = 1;
};

struct SweepSettings {
  std::vector<std::uint64_t> seeds;  // empty: derive `seed_count` seeds from the master seed
  std::size_t seed_count = 5;
  std::size_t pool_correct = 200;
  std::size_t pool_incorrect = 200;
  std::size_t accuracy_pool = 1000;  // first N tasks, unfiltered
  bool reverify = false;
};

struct TrainSettings {
  eib::TrainConfig train;
  std::size_t train_tasks = 60;
};

// Whole experiment description; loaded from one JSON document.
struct ExperimentConfig {
  std::vector<AgentSpec> agents;
  RunConfig run;
  std::uint64_t master_seed = 0;
  TaskSource tasks;
  std::string topology = "full";
  SweepSettings sweep;
  std::vector<std::string> baselines{"full", "layered:3", "random:0.5", "star", "chain", "tree:2"};
  eib::Hyper model;
  std::string salt{eib::kDefaultSalt};
  std::optional<TrainSettings> train;
  std::string output_dir = "out";
  nlohmann::json source = nlohmann::json::object();  // document as loaded, for digests

  std::vector<std::uint64_t> sweep_seeds() const {
    if (!sweep.seeds.empty()) return sweep.seeds;
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < sweep.seed_count; ++i) out.push_back(derive_seed(master_seed, {fnv1a64("sweep"), i}));
    return out;
  }

  std::vector<TaskItem> load_task_list() const {
    if (tasks.path) return load_tasks(*tasks.path);
    return generate_synthetic_tasks(tasks.synthetic_count, tasks.synthetic_alphabet, tasks.synthetic_seed);
  }
};

namespace detail {

inline Aggregation parse_aggregation(const std::string& s) {
  if (s == "majority") return MajorityVote{};
  if (s == "last") return LastAgent{};
  if (s.rfind("judge:", 0) == 0) {
    try {
      return Judge{std::stoul(s.substr(6))};
    } catch (const std::logic_error&) {
    }
  }
  throw ConfigError("unknown aggregation '" + s + "' (expected majority, last, judge:<agent>)");
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.source = j;
  try {
    using detail::get_or;
    const auto& agents = j.at("agents");
    if (agents.is_array()) {
      for (std::size_t i = 0; i < agents.size(); ++i) {
        const auto& a = agents[i];
        c.agents.push_back({i, get_or<std::string>(a, "role", "You are agent " + std::to_string(i) + "."),
                            get_or(a, "competence", 0.5), get_or(a, "social_weight", 0.5)});
      }
    } else {
      c.agents = uniform_agents(agents.at("count").get<std::size_t>(), get_or(agents, "competence", 0.9),
                                get_or(agents, "social_weight", 0.7));
    }
    if (c.agents.empty()) throw ConfigError("config needs at least one agent");
    for (const auto& a : c.agents) a.validate();

    if (j.contains("run")) {
      const auto& r = j.at("run");
      c.run.rounds = get_or<std::size_t>(r, "rounds", 3);
      c.run.aggregation = detail::parse_aggregation(get_or<std::string>(r, "aggregation", "majority"));
      c.master_seed = get_or<std::uint64_t>(r, "seed", 0);
      const auto backend = get_or<std::string>(r, "backend", "synthetic");
      if (backend == "llm") {
        EndpointConfig ep;
        if (r.contains("llm")) {
          ep.model = get_or<std::string>(r.at("llm"), "model", ep.model);
          ep.temperature = get_or(r.at("llm"), "temperature", ep.temperature);
          ep.timeout_seconds = get_or(r.at("llm"), "timeout_seconds", ep.timeout_seconds);
        }
        c.run.backend = LlmBackend{EndpointConfig::from_env(ep)};
      } else if (backend != "synthetic") {
        throw ConfigError("unknown backend '" + backend + "' (expected synthetic or llm)");
      }
    }
    c.run.seed = c.master_seed;
    c.run.validate(c.agents.size());

    if (j.contains("tasks")) {
      const auto& t = j.at("tasks");
      if (t.contains("path")) c.tasks.path = t.at("path").get<std::string>();
      if (t.contains("synthetic")) {
        const auto& s = t.at("synthetic");
        c.tasks.synthetic_count = get_or<std::size_t>(s, "count", c.tasks.synthetic_count);
        c.tasks.synthetic_alphabet = get_or<std::size_t>(s, "alphabet", c.tasks.synthetic_alphabet);
        c.tasks.synthetic_seed = get_or<std::uint64_t>(s, "seed", c.tasks.synthetic_seed);
      }
    }
    c.topology = get_or<std::string>(j, "topology", c.topology);
    (void)parse_kind(c.topology);

    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      if (s.contains("seeds")) {
        if (s.at("seeds").is_array())
          c.sweep.seeds = s.at("seeds").get<std::vector<std::uint64_t>>();
        else
          c.sweep.seed_count = s.at("seeds").get<std::size_t>();
      }
      c.sweep.pool_correct = get_or<std::size_t>(s, "pool_correct", c.sweep.pool_correct);
      c.sweep.pool_incorrect = get_or<std::size_t>(s, "pool_incorrect", c.sweep.pool_incorrect);
      c.sweep.accuracy_pool = get_or<std::size_t>(s, "accuracy_pool", c.sweep.accuracy_pool);
      c.sweep.reverify = get_or(s, "reverify", c.sweep.reverify);
      if (c.sweep.pool_correct == 0 || c.sweep.pool_incorrect == 0) throw ConfigError("sweep pool sizes must be >= 1");
      if (c.sweep.seeds.empty() && c.sweep.seed_count == 0) throw ConfigError("sweep needs at least one seed");
    }
    if (j.contains("baselines")) c.baselines = j.at("baselines").get<std::vector<std::string>>();
    for (const auto& b : c.baselines) (void)parse_kind(b);

    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model.dim = get_or<std::size_t>(m, "dim", c.model.dim);
      c.model.hidden = get_or<std::size_t>(m, "hidden", c.model.hidden);
      c.model.layers = get_or<std::size_t>(m, "layers", c.model.layers);
      c.model.gate_hidden = get_or<std::size_t>(m, "gate_hidden", c.model.gate_hidden);
      c.salt = get_or<std::string>(m, "salt", c.salt);
      c.model.validate();
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      TrainSettings ts;
      ts.train.samples_per_query = get_or<std::size_t>(t, "samples_per_query", ts.train.samples_per_query);
      ts.train.learning_rate = get_or(t, "learning_rate", ts.train.learning_rate);
      ts.train.momentum = get_or(t, "momentum", ts.train.momentum);
      ts.train.queries_per_batch = get_or<std::size_t>(t, "queries_per_batch", ts.train.queries_per_batch);
      ts.train.epochs = get_or<std::size_t>(t, "epochs", ts.train.epochs);
      ts.train.ablation = eib::parse_ablation(get_or<std::string>(t, "ablation", "full"));
      ts.train.use_baseline = get_or(t, "use_baseline", ts.train.use_baseline);
      ts.train_tasks = get_or<std::size_t>(t, "train_tasks", ts.train_tasks);
      ts.train.validate();
      c.train = ts;
    }
    c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// Applies a command-line seed override consistently.
inline void set_master_seed(ExperimentConfig& c, std::uint64_t seed) {
  c.master_seed = seed;
  c.run.seed = seed;
}

}  // namespace topolab::harness
