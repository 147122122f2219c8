#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "topolab/causal.hpp"
#include "topolab/eib/model.hpp"
#include "topolab/eib/train.hpp"
#include "topolab/error.hpp"
#include "topolab/harness/config.hpp"
#include "topolab/harness/digest.hpp"
#include "topolab/harness/report.hpp"
#include "topolab/harness/tasks.hpp"
#include "topolab/protocol.hpp"
#include "topolab/topology.hpp"

namespace topolab::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Reference synthetic setup used when no --config is given.
inline nlohmann::json default_config_json() {
  return {{"agents", {{"count", 6}, {"competence", 0.9}, {"social_weight", 0.7}}},
          {"run", {{"rounds", 3}, {"aggregation", "majority"}, {"seed", 0}, {"backend", "synthetic"}}},
          {"tasks", {{"synthetic", {{"count", 5000}, {"alphabet", 4}, {"seed", 1}}}}}};
}

namespace detail {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct Context {
  ExperimentConfig cfg;
  std::filesystem::path out_dir;
  std::string command;
  std::map<std::string, std::string> inputs;
  std::ostream& out;
  std::ostream& err;

  RunManifest manifest() const {
    RunManifest m;
    m.command = command;
    m.master_seed = cfg.master_seed;
    m.config = cfg.source;
    m.agents = cfg.agents;
    m.inputs = inputs;
    return m;
  }

  std::vector<TaskItem> tasks() {
    if (cfg.tasks.path) inputs[*cfg.tasks.path] = file_digest(*cfg.tasks.path);
    return cfg.load_task_list();
  }
};

inline Context make_context(const Globals& g, const std::string& command, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  std::map<std::string, std::string> inputs;
  if (!g.config_path.empty()) {
    cfg = load_config(g.config_path);
    inputs[g.config_path] = file_digest(g.config_path);
  } else {
    cfg = config_from_json(default_config_json());
  }
  if (g.seed) {
    set_master_seed(cfg, *g.seed);
    cfg.sweep.seeds.clear();
  }
  std::filesystem::path dir = g.out.empty() ? std::filesystem::path(cfg.output_dir) : std::filesystem::path(g.out);
  return {std::move(cfg), std::move(dir), command, std::move(inputs), out, err};
}

inline const TaskItem& pick_task(const std::vector<TaskItem>& tasks, const std::string& id) {
  if (id.empty()) return tasks.front();
  for (const auto& t : tasks)
    if (t.id == id) return t;
  throw InvalidArgument("no task with id '" + id + "'");
}

inline PropagationKind parse_mode(const std::string& mode) {
  if (mode == "error") return PropagationKind::ErrorPropagation;
  if (mode == "insight") return PropagationKind::InsightPropagation;
  throw InvalidArgument("--mode must be 'error' or 'insight', got '" + mode + "'");
}

inline std::vector<TaskItem> head(const std::vector<TaskItem>& tasks, std::size_t n) {
  return {tasks.begin(), tasks.begin() + static_cast<std::ptrdiff_t>(std::min(n, tasks.size()))};
}

inline void note_shortfall(Context& ctx, std::uint64_t seed, const TaskPools& pools) {
  if (pools.shortfall_correct)
    ctx.err << "warning: seed " << seed << ": originally-correct pool short by " << pools.shortfall_correct << "\n";
  if (pools.shortfall_incorrect)
    ctx.err << "warning: seed " << seed << ": originally-incorrect pool short by " << pools.shortfall_incorrect << "\n";
}

inline int cmd_gen(Context& ctx, const std::string& kind_text, std::optional<std::size_t> n_opt, bool write_file) {
  const auto kind = parse_kind(kind_text.empty() ? ctx.cfg.topology : kind_text);
  const std::size_t n = n_opt ? *n_opt : ctx.cfg.agents.size();
  if (n == 0) throw InvalidArgument("--n must be positive");
  Stream rng(ctx.cfg.master_seed, {fnv1a64("gen")});
  const auto j = to_json(build_named(kind, n, &rng));
  ctx.out << j.dump() << "\n";
  if (write_file) {
    ReportWriter w(ctx.out_dir, ctx.manifest());
    w.add("topology.json", j.dump(2) + "\n");
    w.write();
  }
  return kExitOk;
}

inline int cmd_run(Context& ctx, const std::string& kind_text, const std::string& task_id) {
  const auto tasks = ctx.tasks();
  const auto& task = pick_task(tasks, task_id);
  const auto kind = parse_kind(kind_text.empty() ? ctx.cfg.topology : kind_text);
  Stream rng(ctx.cfg.master_seed, {fnv1a64("gen")});
  const Topology t = build_named(kind, ctx.cfg.agents.size(), &rng);
  RunConfig run = ctx.cfg.run;
  run.seed = task_seed(ctx.cfg.master_seed, task);
  run.record_prompts = true;
  const Outcome o = run_dialogue(t, ctx.cfg.agents, task, run);
  auto j = transcript_json(o, task, run.seed);
  j["topology"] = to_json(t);
  ctx.out << j.dump() << "\n";
  ReportWriter w(ctx.out_dir, ctx.manifest());
  w.add("transcript.json", j.dump(2) + "\n");
  w.write();
  return kExitOk;
}

inline int cmd_sweep(Context& ctx, PropagationKind mode) {
  const auto tasks = ctx.tasks();
  const auto acc_tasks = head(tasks, ctx.cfg.sweep.accuracy_pool);
  const std::size_t n = ctx.cfg.agents.size();
  if (n < 2) throw InvalidArgument("sweeps need at least two agents");
  const bool err_mode = mode == PropagationKind::ErrorPropagation;
  std::vector<SweepReport> reports;
  for (const std::uint64_t seed : ctx.cfg.sweep_seeds()) {
    RunConfig run = ctx.cfg.run;
    run.seed = seed;
    const auto base = err_mode ? full_topology(n) : chain_topology(n);
    const auto pools = partition_by_correctness(base, ctx.cfg.agents, tasks, run,
                                                err_mode ? ctx.cfg.sweep.pool_correct : 0,
                                                err_mode ? 0 : ctx.cfg.sweep.pool_incorrect);
    note_shortfall(ctx, seed, pools);
    Stream rng(seed, {fnv1a64("sweep-path")});
    SweepOptions opts{ctx.cfg.sweep.reverify, acc_tasks};
    reports.push_back(err_mode ? sweep_error_propagation(ctx.cfg.agents, pools.correct, run, sparsify_path(n, rng), opts)
                               : sweep_insight_propagation(ctx.cfg.agents, pools.incorrect, run,
                                                           densify_path(n, rng), opts));
    ctx.err << "sweep " << direction_label(mode) << " seed " << seed << ": " << reports.back().rows.size()
            << " steps\n";
  }
  write_report(reports, ctx.out_dir, ctx.manifest());
  ctx.out << sweep_summary(reports);
  return kExitOk;
}

inline int cmd_baselines(Context& ctx) {
  const auto tasks = ctx.tasks();
  const auto acc_tasks = head(tasks, ctx.cfg.sweep.accuracy_pool);
  const std::size_t n = ctx.cfg.agents.size();
  std::vector<TopologyKind> kinds;
  for (const auto& k : ctx.cfg.baselines) kinds.push_back(parse_kind(k));
  std::vector<BaselineTable> tables;
  for (const std::uint64_t seed : ctx.cfg.sweep_seeds()) {
    RunConfig run = ctx.cfg.run;
    run.seed = seed;
    const auto correct = partition_by_correctness(full_topology(n), ctx.cfg.agents, tasks, run,
                                                  ctx.cfg.sweep.pool_correct, 0);
    const auto incorrect = partition_by_correctness(chain_topology(n), ctx.cfg.agents, tasks, run, 0,
                                                    ctx.cfg.sweep.pool_incorrect);
    note_shortfall(ctx, seed, correct);
    note_shortfall(ctx, seed, incorrect);
    SweepOptions opts{ctx.cfg.sweep.reverify, acc_tasks};
    tables.push_back({seed, baseline_suite(ctx.cfg.agents, correct.correct, incorrect.incorrect, run, kinds, opts)});
  }
  ReportWriter w(ctx.out_dir, ctx.manifest());
  w.add("baselines.csv", baselines_csv(tables));
  const auto summary = baseline_summary(tables);
  w.add("summary.txt", summary);
  w.write();
  ctx.out << summary;
  return kExitOk;
}

inline int cmd_train(Context& ctx, const std::string& ablation, std::optional<std::size_t> epochs) {
  TrainSettings ts = ctx.cfg.train.value_or(TrainSettings{});
  if (!ablation.empty()) ts.train.ablation = eib::parse_ablation(ablation);
  if (epochs) ts.train.epochs = *epochs;
  ts.train.seed = ctx.cfg.master_seed;
  ts.train.validate();
  const auto tasks = head(ctx.tasks(), ts.train_tasks);
  auto model = eib::init_model(ctx.cfg.model, derive_seed(ctx.cfg.master_seed, {fnv1a64("model")}),
                               ts.train.ablation, ctx.cfg.salt);
  const auto env = eib::dialogue_reward(ctx.cfg.agents, ctx.cfg.run);
  std::string log = "step,mean_reward,grad_norm,alpha_dense,alpha_sparse\n";
  eib::train(model, ctx.cfg.agents, tasks, env, ts.train, [&](std::size_t step, const eib::StepStats& s) {
    log += std::to_string(step) + "," + format_number(s.mean_reward) + "," + format_number(s.grad_norm) + "," +
           format_number(s.mean_alpha[0]) + "," + format_number(s.mean_alpha[1]) + "\n";
    if (step % 25 == 0) ctx.err << "step " << step << " reward " << s.mean_reward << "\n";
  });
  ReportWriter w(ctx.out_dir, ctx.manifest());
  w.add("checkpoint.json", eib::checkpoint_json(model).dump() + "\n");
  w.add("train_log.csv", log);
  w.write();
  ctx.out << "wrote " << (ctx.out_dir / "checkpoint.json").string() << "\n";
  return kExitOk;
}

inline int cmd_design(Context& ctx, const std::string& checkpoint, const std::string& task_id) {
  const std::string path = checkpoint.empty() ? (ctx.out_dir / "checkpoint.json").string() : checkpoint;
  nlohmann::json ck;
  try {
    ck = nlohmann::json::parse(read_file(path));
  } catch (const IoError&) {
    throw InvalidArgument("cannot read checkpoint '" + path + "'");
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  ctx.inputs[path] = file_digest(path);
  const auto model = eib::model_from_checkpoint(ck);
  const auto tasks = ctx.tasks();
  const auto& task = pick_task(tasks, task_id);
  Stream rng(ctx.cfg.master_seed, {fnv1a64("design"), fnv1a64(task.id)});
  const auto d = eib::design_topology(model, ctx.cfg.agents, task, rng);
  nlohmann::json probs = nlohmann::json::array();
  for (Eigen::Index i = 0; i < d.m_final.m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < d.m_final.m.cols(); ++j) row.push_back(d.m_final.m(i, j));
    probs.push_back(std::move(row));
  }
  nlohmann::json j = {{"task_id", task.id},
                      {"alpha", {d.alpha[0], d.alpha[1]}},
                      {"edge_probabilities", probs},
                      {"topology", to_json(d.topology)}};
  ReportWriter w(ctx.out_dir, ctx.manifest());
  w.add("design.json", j.dump(2) + "\n");
  w.write();
  ctx.out << to_json(d.topology).dump() << "\n";
  return kExitOk;
}

// Re-renders summary.txt from the data files in the output directory and
// checks the manifest against them.
inline int cmd_report(Context& ctx) {
  const auto& dir = ctx.out_dir;
  if (!std::filesystem::is_directory(dir)) throw InvalidArgument("output directory '" + dir.string() + "' not found");
  std::string summary;
  for (const char* name : {"sweep_error.csv", "sweep_insight.csv"}) {
    if (!std::filesystem::exists(dir / name)) continue;
    std::istringstream in(read_file((dir / name).string()));
    summary += sweep_summary(parse_sweep_csv(in, (dir / name).string()));
  }
  if (std::filesystem::exists(dir / "baselines.csv")) summary += "baselines.csv present\n";
  if (summary.empty()) throw InvalidArgument("no sweep CSV found in '" + dir.string() + "'");
  ctx.out << summary;
  if (std::filesystem::exists(dir / "manifest.json")) {
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(read_file((dir / "manifest.json").string()));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(std::string("manifest.json is not valid JSON: ") + e.what());
    }
    auto problems = verify_manifest(m);
    // summary.txt is rewritten below; skip it when checking outputs.
    const auto outputs = m.value("outputs", nlohmann::json::object());
    for (const auto& [name, digest] : outputs.items()) {
      if (name == "summary.txt") continue;
      try {
        if (file_digest((dir / name).string()) != digest.get<std::string>()) problems.push_back("output changed: " + name);
      } catch (const IoError&) {
        problems.push_back("output missing: " + name);
      }
    }
    if (!problems.empty()) {
      for (const auto& p : problems) ctx.err << "manifest: " << p << "\n";
      return kExitValidation;
    }
    ctx.err << "manifest verified\n";
  }
  write_text(dir / "summary.txt", summary);
  return kExitOk;
}

inline std::string join_args(int argc, const char* const* argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

}  // namespace detail

inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  CLI::App app{"Multi-agent communication topology laboratory", "topolab"};
  app.require_subcommand(1);
  detail::Globals g;
  std::uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "experiment config (JSON)");
  auto* seed_opt = app.add_option("--seed", seed_value, "master seed (u64)");
  app.add_option("--out", g.out, "output directory");

  std::string kind, task_id, mode, ablation, checkpoint;
  std::size_t n = 0, epochs = 0;
  auto* gen = app.add_subcommand("gen", "emit a named topology as JSON");
  auto* gen_n = gen->add_option("--n", n, "number of agents");
  gen->add_option("--kind", kind, "full|chain|star|layered:L|random:P|tree:B");
  auto* run = app.add_subcommand("run", "run a single dialogue");
  run->add_option("--kind", kind, "topology kind");
  run->add_option("--task", task_id, "task id (default: first task)");
  auto* sweep = app.add_subcommand("sweep", "error or insight propagation sweep");
  sweep->add_option("--mode", mode, "error|insight")->required();
  auto* base = app.add_subcommand("baselines", "evaluate the named topology suite");
  auto* train = app.add_subcommand("train", "train the topology generator");
  train->add_option("--ablation", ablation, "full|dense-only|sparse-only|no-fusion");
  auto* train_epochs = train->add_option("--epochs", epochs, "override epoch count");
  auto* design = app.add_subcommand("design", "sample a topology for one query");
  design->add_option("--checkpoint", checkpoint, "checkpoint path (default: <out>/checkpoint.json)");
  design->add_option("--task", task_id, "task id (default: first task)");
  auto* report = app.add_subcommand("report", "re-render outputs and verify the manifest");
  for (auto* sub : {gen, run, sweep, base, train, design, report}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitValidation;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    CLI::App* sub = app.get_subcommands().front();
    auto ctx = detail::make_context(g, detail::join_args(argc, argv), out, err);
    if (sub == gen) return detail::cmd_gen(ctx, kind, *gen_n ? std::optional<std::size_t>(n) : std::nullopt, !g.out.empty());
    if (sub == run) return detail::cmd_run(ctx, kind, task_id);
    if (sub == sweep) return detail::cmd_sweep(ctx, detail::parse_mode(mode));
    if (sub == base) return detail::cmd_baselines(ctx);
    if (sub == train)
      return detail::cmd_train(ctx, ablation, *train_epochs ? std::optional<std::size_t>(epochs) : std::nullopt);
    if (sub == design) return detail::cmd_design(ctx, checkpoint, task_id);
    return detail::cmd_report(ctx);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace topolab::harness
