// groundloop: command-line driver for scene generation, training,
// self-evolution, evaluation, diagnostics and ablations.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "groundloop/ablation.hpp"
#include "groundloop/config.hpp"
#include "groundloop/error.hpp"
#include "groundloop/evolution.hpp"
#include "groundloop/metrics.hpp"
#include "groundloop/scene.hpp"

namespace fs = std::filesystem;
using namespace groundloop;

namespace {

// Exit codes: 0 ok, 2 usage/config, 3 I/O, 4 snapshot integrity, 5 numeric.
int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kIo: return 3;
    case ErrorKind::kSnapshotVersion: return 4;  // kSnapshotDigest shares the value
    case ErrorKind::kNumeric: return 5;
    case ErrorKind::kContract:
    case ErrorKind::kConfig:
    case ErrorKind::kGeneration: return 2;
  }
  return 1;
}

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string run_dir;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_run_dir = true) {
  cmd->add_option("-c,--config", c.config_path, "config file (sectioned key = value)");
  cmd->add_option("-s,--set", c.sets, "override one key, e.g. --set grpo.epochs=2")->take_all();
  if (with_run_dir) {
    cmd->add_option("-o,--run-dir", c.run_dir, "run directory (overrides run.dir)");
    cmd->add_flag("-f,--force", c.force, "replace an existing non-empty run directory");
  }
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? default_config() : load_config(c.config_path);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::kConfig, "--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (!c.run_dir.empty()) cfg.run_dir = c.run_dir;
  validate(cfg);
  return cfg;
}

// Creates the run directory. An existing non-empty one is refused unless
// `force` (wiped) or `keep` (resume) is set.
void open_run_dir(const RunConfig& cfg, bool force, bool keep = false) {
  const fs::path dir(cfg.run_dir);
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !keep) {
    if (!force)
      throw Error(ErrorKind::kConfig, "run directory " + cfg.run_dir + " is not empty; pass --force to replace it");
    fs::remove_all(dir, ec);
    if (ec) throw Error(ErrorKind::kIo, "cannot clear " + cfg.run_dir + ": " + ec.message());
  }
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + cfg.run_dir + ": " + ec.message());
  write_file_atomic((dir / "resolved.cfg").string(), resolved_config_text(cfg));
}

std::string in_run(const RunConfig& cfg, const char* name) { return (fs::path(cfg.run_dir) / name).string(); }

std::vector<SceneSample> samples_from(const std::string& path, const SeedRange& range, const RunConfig& cfg) {
  if (!path.empty()) return load_dataset(path);
  return generate_samples(range.start, range.count, cfg.scene, cfg.workers);
}

std::string kind_histogram(const std::vector<SceneSample>& samples) {
  std::map<std::string, int> counts{{"direct", 0}, {"relational", 0}, {"implicit", 0}};
  for (const auto& s : samples) ++counts[query_kind_name(s.query.kind)];
  return "direct = " + std::to_string(counts["direct"]) + "\nrelational = " + std::to_string(counts["relational"]) +
         "\nimplicit = " + std::to_string(counts["implicit"]) + "\n";
}

int cmd_gen_scenes(const Common& c, const std::string& out, const std::string& split, std::optional<int> count) {
  RunConfig cfg = resolve(c);
  SeedRange range = split == "eval" ? cfg.eval_scenes : cfg.train_scenes;
  if (count) range.count = *count;
  if (range.count < 1) throw Error(ErrorKind::kConfig, "gen-scenes: count must be positive");
  if (fs::exists(out) && !c.force)
    throw Error(ErrorKind::kConfig, out + " exists; pass --force to replace it");
  const auto samples = generate_samples(range.start, range.count, cfg.scene, cfg.workers);
  save_dataset(out, samples);
  std::cout << "samples = " << samples.size() << "\n" << kind_histogram(samples);
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& eval_data, const std::string& mode,
              const std::string& from) {
  RunConfig cfg = resolve(c);
  if (!mode.empty()) {
    const auto m = parse_reward_mode(mode);
    if (!m) throw Error(ErrorKind::kConfig, "unknown reward mode '" + mode + "'");
    cfg.grpo.reward_mode = *m;
  }
  // Samples first: a bad dataset path should fail before any directory work.
  const auto train = samples_from(data, cfg.train_scenes, cfg);
  const auto evals = samples_from(eval_data, cfg.eval_scenes, cfg);
  PolicySnapshot start;
  std::optional<PretrainResult> pretrained;
  if (!from.empty()) {
    start = load_snapshot(from);
  } else if (cfg.grpo.reward_mode != RewardMode::kIntrinsicSnapshot) {
    // No reward head needed; the snapshot carries an untrained (constant 0.5) one.
    start.policy = init_params(cfg.policy, cfg.seed, cfg.init_scale);
    start.config_digest = config_digest(cfg);
    start.seed_chain = "seed=" + std::to_string(cfg.seed) + ";policy=init;verifier=none";
  } else {
    pretrained.emplace();
    start = bootstrap_round0(cfg, cfg.seed, &*pretrained);
  }
  open_run_dir(cfg, c.force);

  const auto ptrain = prepare_samples(train, cfg.workers);
  const auto peval = prepare_samples(evals, cfg.workers);
  const TrainResult r = train_run(cfg, start, RoundData{ptrain, peval});
  const EvalConfig ecfg = eval_config(cfg);

  write_file_atomic(in_run(cfg, "steps.csv"), r.steps_csv);
  write_file_atomic(in_run(cfg, "eval.csv"), eval_report_csv(r.eval, ecfg.giou_mode));
  std::string summary = "reward_mode = " + std::string(reward_mode_name(cfg.grpo.reward_mode)) + "\n";
  summary += "train_samples = " + std::to_string(train.size()) + "\n";
  char buf[96];
  std::snprintf(buf, sizeof buf, "mean_reward = %.17g\n", r.mean_reward);
  summary += buf;
  summary += "gt_reads_in_training = " + std::to_string(r.gt_reads) + "\n";
  if (pretrained) {
    std::snprintf(buf, sizeof buf, "verifier_heldout_accuracy = %.17g\n", pretrained->heldout_accuracy);
    summary += buf;
  }
  summary += eval_report_summary(r.eval, ecfg.giou_mode);
  write_file_atomic(in_run(cfg, "summary.txt"), summary);
  save_snapshot(r.snapshot, in_run(cfg, "snapshot.snap"));
  std::cout << summary;
  return 0;
}

int cmd_evolve(const Common& c, std::optional<int> rounds, bool resume) {
  RunConfig cfg = resolve(c);
  if (rounds) cfg.evolution.rounds = *rounds;
  validate(cfg);
  open_run_dir(cfg, c.force, resume);
  const EvolutionReport rep = run_evolution(cfg, EvolutionOptions{resume, std::nullopt});
  std::cout << rounds_csv(rep);
  return 0;
}

int cmd_eval(const Common& c, const std::string& snapshot, const std::string& data) {
  RunConfig cfg = resolve(c);
  const PolicySnapshot snap = load_snapshot(snapshot);
  const auto samples = samples_from(data, cfg.eval_scenes, cfg);
  const auto prepared = prepare_samples(samples, cfg.workers);
  const EvalConfig ecfg = eval_config(cfg);
  const EvalReport rep = evaluate_policy(snap.policy, prepared, ecfg, &snap.verifier).report;
  open_run_dir(cfg, c.force);
  write_file_atomic(in_run(cfg, "eval.csv"), eval_report_csv(rep, ecfg.giou_mode));
  const std::string summary = "snapshot_round = " + std::to_string(snap.round) + "\n" +
                              eval_report_summary(rep, ecfg.giou_mode);
  write_file_atomic(in_run(cfg, "eval.txt"), summary);
  std::cout << summary;
  return 0;
}

int cmd_diagnose(const Common& c, const std::string& snapshot, const std::string& data) {
  RunConfig cfg = resolve(c);
  const PolicySnapshot snap = load_snapshot(snapshot);
  const auto samples = samples_from(data, cfg.eval_scenes, cfg);
  const auto prepared = prepare_samples(samples, cfg.workers);
  const EntropyReport e = entropy_report(snap.policy, snap.verifier, prepared, eval_config(cfg));
  open_run_dir(cfg, c.force);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "snapshot_round = %d\nsamples = %zu\nmean_gen_entropy_bits = %.17g\nmax_ver_entropy_bits = %.17g\n"
                "entropy_ratio = %.17g\nver_entropy_bound_holds = %s\n",
                snap.round, samples.size(), e.mean_gen_entropy_bits, e.max_ver_entropy_bits, e.ratio,
                e.ver_bound_holds ? "true" : "false");
  write_file_atomic(in_run(cfg, "diagnose.txt"), buf);
  std::cout << buf;
  return 0;
}

int cmd_ablate(const Common& c, const std::string& axis_name, int seeds, std::optional<std::uint64_t> first,
               const std::string& mode) {
  RunConfig cfg = resolve(c);
  const auto axis = parse_ablation_axis(axis_name);
  if (!axis) throw Error(ErrorKind::kConfig, "unknown ablation axis '" + axis_name + "'");
  if (seeds < 1) throw Error(ErrorKind::kConfig, "ablate needs at least one seed");
  AblationOptions opt;
  if (!mode.empty()) {
    opt.reward_mode = parse_reward_mode(mode);
    if (!opt.reward_mode) throw Error(ErrorKind::kConfig, "unknown reward mode '" + mode + "'");
  }
  std::vector<std::uint64_t> list;
  for (int i = 0; i < seeds; ++i) list.push_back(first.value_or(cfg.seed) + static_cast<std::uint64_t>(i));
  open_run_dir(cfg, c.force);
  const AblationTable t = ablation_run(cfg, *axis, list, opt);
  write_file_atomic(in_run(cfg, "ablation.csv"), ablation_csv(t));
  const std::string summary = ablation_summary(t);
  write_file_atomic(in_run(cfg, "ablation.txt"), summary);
  std::cout << summary;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"groundloop: verifier-rewarded grounding on synthetic aerial scenes"};
  app.require_subcommand(0, 1);
  bool print_reference = false;
  app.add_flag("--config-reference", print_reference, "print every configuration key with its default and exit");
  app.footer("Configuration keys (defaults; [published] marks values from the published setup):\n" +
             config_reference());

  Common common;
  std::string out, split = "train", data, eval_data, mode, from, snapshot, axis;
  std::optional<int> count, rounds;
  std::optional<std::uint64_t> first_seed;
  bool resume = false;
  int seeds = 0;

  auto* gen = app.add_subcommand("gen-scenes", "write a scene-v1 dataset");
  add_common(gen, common, false);
  gen->add_option("--out", out, "dataset path")->required();
  gen->add_option("--split", split, "seed range to draw from")->check(CLI::IsMember({"train", "eval"}));
  gen->add_option("--count", count, "samples (default: the split's count)");
  gen->add_flag("-f,--force", common.force, "replace an existing file");

  auto* train = app.add_subcommand("train", "one GRPO training run");
  add_common(train, common);
  train->add_option("--data", data, "training dataset (default: generated train range)");
  train->add_option("--eval-data", eval_data, "evaluation dataset (default: generated eval range)");
  train->add_option("--mode", mode, "reward mode (overrides grpo.reward_mode)");
  train->add_option("--from", from, "start from this snapshot instead of a fresh round-0 bootstrap");

  auto* evolve = app.add_subcommand("evolve", "K self-evolution rounds");
  add_common(evolve, common);
  evolve->add_option("-k,--rounds", rounds, "rounds (overrides evolution.rounds)");
  evolve->add_flag("--resume", resume, "reuse completed rounds in the run directory");

  auto* eval = app.add_subcommand("eval", "greedy-decode evaluation of a snapshot");
  add_common(eval, common);
  eval->add_option("--snapshot", snapshot, "snapshot path")->required();
  eval->add_option("--data", data, "dataset (default: generated eval range)");

  auto* diag = app.add_subcommand("diagnose", "generation vs verification entropy");
  add_common(diag, common);
  diag->add_option("--snapshot", snapshot, "snapshot path")->required();
  diag->add_option("--data", data, "dataset (default: generated eval range)");

  auto* abl = app.add_subcommand("ablate", "paired two-variant ablation over seeds");
  add_common(abl, common);
  abl->add_option("--axis", axis, "area-penalty or crop-strategy")->required();
  abl->add_option("--seeds", seeds, "number of seeds")->required();
  abl->add_option("--first-seed", first_seed, "first seed (default: run.seed)");
  abl->add_option("--mode", mode, "reward mode (default depends on the axis)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (print_reference) {
    std::cout << config_reference();
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help() << "a subcommand is required\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_scenes(common, out, split, count);
    if (train->parsed()) return cmd_train(common, data, eval_data, mode, from);
    if (evolve->parsed()) return cmd_evolve(common, rounds, resume);
    if (eval->parsed()) return cmd_eval(common, snapshot, data);
    if (diag->parsed()) return cmd_diagnose(common, snapshot, data);
    if (abl->parsed()) return cmd_ablate(common, axis, seeds, first_seed, mode);
  } catch (const Error& e) {
    std::cerr << "groundloop: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "groundloop: internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
