#include "groundloop/evolution.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "groundloop/error.hpp"

namespace fs = std::filesystem;

namespace groundloop {
namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

void append_array(std::string& out, const char* name, std::span<const double> values) {
  out += name;
  out += " = " + std::to_string(values.size()) + "\n";
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    out += buf;
    out += (i % 8 == 7 || i + 1 == values.size()) ? '\n' : ' ';
  }
}

[[noreturn]] void malformed(const std::string& what) {
  throw SnapshotDigestError("snapshot: malformed content (" + what + ")");
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}

  std::string line() {
    std::string l;
    if (!std::getline(in_, l)) malformed("unexpected end");
    return l;
  }

  std::string field(const std::string& name) {
    const std::string l = line();
    const std::string prefix = name + " = ";
    if (l.rfind(prefix, 0) != 0) malformed("expected " + name);
    return l.substr(prefix.size());
  }

  std::vector<double> array(const std::string& name) {
    const std::size_t n = to_size(field(name));
    std::vector<double> v;
    v.reserve(n);
    while (v.size() < n) {
      std::istringstream row(line());
      std::string tok;
      while (row >> tok) {
        double d = 0.0;
        const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), d);
        if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) malformed("bad number in " + name);
        v.push_back(d);
      }
    }
    if (v.size() != n) malformed("length of " + name);
    return v;
  }

  bool at_end() {
    return in_.peek() == std::char_traits<char>::eof();
  }

  static std::size_t to_size(const std::string& s) {
    std::size_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) malformed("bad count");
    return v;
  }

 private:
  std::istringstream in_;
};

int to_int(const std::string& s) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) malformed("bad integer");
  return v;
}

std::uint64_t from_hex(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (s.size() != 16 || r.ec != std::errc() || r.ptr != s.data() + s.size()) malformed("bad hex");
  return v;
}

// Small key = value files next to snapshots.
std::string kv_text(const std::map<std::string, double>& kv) {
  std::string out;
  char buf[64];
  for (const auto& [k, v] : kv) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += k + " = " + buf + "\n";
  }
  return out;
}

std::map<std::string, double> parse_kv(const std::string& text) {
  std::map<std::string, double> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = std::strtod(line.c_str() + eq + 3, nullptr);
  }
  return kv;
}

}  // namespace

std::string serialize_snapshot(const PolicySnapshot& s) {
  std::string out = std::string(kSnapshotVersion) + "\n";
  out += "round = " + std::to_string(s.round) + "\n";
  out += "config_digest = " + hex64(s.config_digest) + "\n";
  require(s.seed_chain.find('\n') == std::string::npos, "snapshot: seed chain must be one line");
  out += "seed_chain = " + s.seed_chain + "\n";
  const PolicyShape& p = s.policy.shape;
  out += "policy.shape = " + std::to_string(p.input) + " " + std::to_string(p.hidden) + " " +
         std::to_string(p.intent) + " " + std::to_string(p.bins) + "\n";
  require(s.policy.data.size() == p.size(), "snapshot: policy data does not match its shape");
  append_array(out, "policy.data", s.policy.data);
  append_array(out, "verifier.data", s.verifier.weights);
  out += "digest = " + hex64(fnv1a64(out)) + "\n";
  return out;
}

PolicySnapshot parse_snapshot(const std::string& text) {
  const auto nl = text.find('\n');
  const std::string version = text.substr(0, nl);
  if (version != kSnapshotVersion) {
    if (version.rfind("snap-", 0) == 0)
      throw SnapshotVersionError("snapshot: unsupported version '" + version + "' (expected " +
                                 kSnapshotVersion + ")");
    throw SnapshotDigestError("snapshot: missing version header");
  }
  const std::string marker = "\ndigest = ";
  const auto d = text.rfind(marker);
  if (d == std::string::npos) throw SnapshotDigestError("snapshot: missing digest");
  const std::string body = text.substr(0, d + 1);
  const std::string tail = text.substr(d + marker.size());
  if (tail.size() != 17 || tail.back() != '\n') throw SnapshotDigestError("snapshot: malformed digest line");
  const std::string stored = tail.substr(0, 16);
  if (stored != hex64(fnv1a64(body)))
    throw SnapshotDigestError("snapshot: digest mismatch (stored " + stored + ", computed " +
                              hex64(fnv1a64(body)) + ")");

  LineReader r(body);
  r.line();
  PolicySnapshot s;
  s.round = to_int(r.field("round"));
  s.config_digest = from_hex(r.field("config_digest"));
  s.seed_chain = r.field("seed_chain");
  std::istringstream shape(r.field("policy.shape"));
  PolicyShape ps;
  if (!(shape >> ps.input >> ps.hidden >> ps.intent >> ps.bins)) malformed("policy.shape");
  if (ps.input <= 0 || ps.hidden <= 0 || ps.intent <= 0 || ps.bins <= 0) malformed("policy.shape");
  s.policy = PolicyParams(ps);
  s.policy.data = r.array("policy.data");
  if (s.policy.data.size() != ps.size()) malformed("policy.data length");
  s.verifier.weights = r.array("verifier.data");
  if (s.verifier.weights.size() != static_cast<std::size_t>(VerifierParams::kSize))
    malformed("verifier.data length");
  if (!r.at_end()) malformed("trailing content");
  return s;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw Error(ErrorKind::kIo, "cannot create directory for " + path + ": " + ec.message());
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp);
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_snapshot(const PolicySnapshot& s, const std::string& path) {
  write_file_atomic(path, serialize_snapshot(s));
}

PolicySnapshot load_snapshot(const std::string& path) { return parse_snapshot(read_file(path)); }

PolicySnapshot bootstrap_round0(const RunConfig& config, std::uint64_t seed, PretrainResult* pretrain) {
  validate(config);
  PolicySnapshot s;
  s.round = 0;
  s.policy = init_params(config.policy, seed, config.init_scale);
  const std::uint64_t vseed = Stream(seed).split(StreamPurpose::kVerifierInit, 0).key();
  PretrainResult pr = pretrain_verifier(pretrain_config(config), vseed);
  s.verifier = pr.params;
  s.config_digest = config_digest(config);
  s.seed_chain = "seed=" + std::to_string(seed) + ";policy=init;verifier=verifier-init/0";
  if (pretrain) *pretrain = std::move(pr);
  return s;
}

FrozenVerifier make_round_verifier(const PolicySnapshot& prev) {
  return FrozenVerifier(prev.verifier, prev.round);
}

PolicySnapshot run_round(EvolutionState& state, const PolicySnapshot& prev, const RunConfig& config,
                         const RoundData& data, std::string* steps_csv) {
  if (prev.round != state.k)
    throw Error(ErrorKind::kConfig, "run_round: snapshot is round " + std::to_string(prev.round) +
                                        " but the state expects round " + std::to_string(state.k));
  const int k = state.k + 1;
  const Stream round_stream = Stream(config.seed).split(StreamPurpose::kRound, static_cast<std::uint64_t>(k));
  const FrozenVerifier verifier = make_round_verifier(prev);

  PolicyParams params = config.evolution.reinit_policy
                            ? init_params(config.policy, round_stream.split(StreamPurpose::kInit, 0).key(),
                                          config.init_scale)
                            : prev.policy;
  const PolicyParams ref = params;
  GrpoConfig g = grpo_config(config);
  g.reward_mode = RewardMode::kIntrinsicSnapshot;
  const RewardSource source{RewardMode::kIntrinsicSnapshot, &verifier};

  double reward_sum = 0.0;
  std::int64_t steps = 0;
  if (steps_csv) *steps_csv = step_csv_header() + "\n";
  const std::uint64_t reads_before = gt_audit_count();
  train_policy(params, ref, data.train, g, source, round_stream, [&](const StepStats& st) {
    reward_sum += st.mean_reward;
    ++steps;
    if (steps_csv) *steps_csv += step_csv_row(st) + "\n";
  });
  const std::uint64_t reads = gt_audit_count() - reads_before;

  PolicySnapshot next;
  next.round = k;
  next.policy = std::move(params);
  if (config.evolution.verifier_refresh) {
    const std::uint64_t vseed = Stream(config.seed).split(StreamPurpose::kVerifierInit, static_cast<std::uint64_t>(k)).key();
    next.verifier = pretrain_verifier(pretrain_config(config), vseed).params;
  } else {
    next.verifier = prev.verifier;
  }
  next.config_digest = config_digest(config);
  next.seed_chain = prev.seed_chain + ";round=" + std::to_string(k);

  RoundMetrics m;
  m.round = k;
  m.eval = evaluate_policy(next.policy, data.eval, eval_config(config), &next.verifier).report;
  m.mean_reward = steps ? reward_sum / static_cast<double>(steps) : 0.0;
  m.gt_reads = reads;
  state.history.push_back(m);
  state.k = k;
  return next;
}

TrainResult train_run(const RunConfig& config, const PolicySnapshot& start, const RoundData& data) {
  validate(config);
  const int k = start.round + 1;
  const Stream stream = Stream(config.seed).split(StreamPurpose::kRound, static_cast<std::uint64_t>(k));
  const FrozenVerifier verifier = make_round_verifier(start);
  const GrpoConfig g = grpo_config(config);
  const RewardSource source{g.reward_mode,
                            g.reward_mode == RewardMode::kIntrinsicSnapshot ? &verifier : nullptr};

  TrainResult out;
  PolicyParams params = start.policy;
  const PolicyParams ref = params;
  double reward_sum = 0.0;
  std::int64_t steps = 0;
  out.steps_csv = step_csv_header() + "\n";
  const std::uint64_t reads_before = gt_audit_count();
  train_policy(params, ref, data.train, g, source, stream, [&](const StepStats& st) {
    reward_sum += st.mean_reward;
    ++steps;
    out.steps_csv += step_csv_row(st) + "\n";
  });
  out.gt_reads = gt_audit_count() - reads_before;
  out.mean_reward = steps ? reward_sum / static_cast<double>(steps) : 0.0;

  out.snapshot.round = k;
  out.snapshot.policy = std::move(params);
  out.snapshot.verifier = start.verifier;
  out.snapshot.config_digest = config_digest(config);
  out.snapshot.seed_chain = start.seed_chain + ";train=" + reward_mode_name(g.reward_mode);
  out.eval = evaluate_policy(out.snapshot.policy, data.eval, eval_config(config), &out.snapshot.verifier).report;
  return out;
}

std::string evolution_report_text(const EvolutionReport& r) {
  char buf[512];
  std::string out = "evolution-report-v1\n";
  out += "rounds = " + std::to_string(r.rounds) + "\n";
  out += "seed = " + std::to_string(r.seed) + "\n";
  out += "config_digest = " + hex64(r.config_digest) + "\n";
  std::snprintf(buf, sizeof buf, "verifier_heldout_accuracy = %.17g\n", r.verifier_heldout_accuracy);
  out += buf;
  out += "\n" + rounds_csv(r);
  return out;
}

std::string rounds_csv(const EvolutionReport& r) {
  std::string out =
      "round,acc_at_05,giou,mean_iou,mean_generalized_iou,mean_reward,gen_entropy_bits,"
      "max_ver_entropy_bits,gt_reads,snapshot\n";
  char buf[512];
  for (std::size_t i = 0; i < r.table.size(); ++i) {
    const auto& m = r.table[i];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%llu,%s\n", m.round,
                  m.eval.acc_at_05, m.eval.giou, m.eval.mean_iou, m.eval.mean_generalized_iou, m.mean_reward,
                  m.eval.mean_gen_entropy_bits, m.eval.max_ver_entropy_bits,
                  static_cast<unsigned long long>(m.gt_reads), i < r.snapshots.size() ? r.snapshots[i].c_str() : "");
    out += buf;
  }
  return out;
}

EvolutionReport run_evolution(const RunConfig& config, const EvolutionOptions& options) {
  validate(config);
  const fs::path root(config.run_dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create run directory " + config.run_dir + ": " + ec.message());

  const auto train = generate_samples(config.train_scenes.start, config.train_scenes.count, config.scene,
                                      config.workers);
  const auto evals = generate_samples(config.eval_scenes.start, config.eval_scenes.count, config.scene,
                                      config.workers);
  const auto ptrain = prepare_samples(train, config.workers);
  const auto peval = prepare_samples(evals, config.workers);
  const RoundData data{ptrain, peval};
  const EvalConfig ecfg = eval_config(config);
  const std::uint64_t digest = config_digest(config);

  EvolutionReport rep;
  rep.rounds = config.evolution.rounds;
  rep.seed = config.seed;
  rep.config_digest = digest;

  auto round_dir = [&](int k) { return root / ("round-" + std::to_string(k)); };
  auto rel_snapshot = [](int k) { return "round-" + std::to_string(k) + "/snapshot.snap"; };
  auto load_checked = [&](int k) {
    PolicySnapshot s = load_snapshot((round_dir(k) / "snapshot.snap").string());
    if (s.round != k || s.config_digest != digest)
      throw Error(ErrorKind::kConfig, "resume: " + rel_snapshot(k) + " belongs to a different run");
    return s;
  };
  auto completed = [&](int k) {
    return options.resume && fs::exists(round_dir(k) / "snapshot.snap") && fs::exists(round_dir(k) / "round.txt");
  };

  PolicySnapshot snap;
  if (completed(0)) {
    snap = load_checked(0);
    rep.verifier_heldout_accuracy = parse_kv(read_file((round_dir(0) / "round.txt").string()))["verifier_heldout_accuracy"];
  } else {
    PretrainResult pr;
    snap = bootstrap_round0(config, config.seed, &pr);
    rep.verifier_heldout_accuracy = pr.heldout_accuracy;
    write_file_atomic((round_dir(0) / "round.txt").string(),
                      kv_text({{"round", 0.0},
                               {"verifier_heldout_accuracy", pr.heldout_accuracy},
                               {"verifier_train_accuracy", pr.train_accuracy}}));
    save_snapshot(snap, (round_dir(0) / "snapshot.snap").string());
  }
  RoundMetrics m0;
  m0.round = 0;
  m0.eval = evaluate_policy(snap.policy, peval, ecfg, &snap.verifier).report;
  write_file_atomic((round_dir(0) / "eval.csv").string(), eval_report_csv(m0.eval, ecfg.giou_mode));
  rep.table.push_back(m0);
  rep.snapshots.push_back(rel_snapshot(0));

  EvolutionState state;
  state.total_rounds = config.evolution.rounds;
  state.snapshot_paths.push_back(rel_snapshot(0));
  const int last = std::min(config.evolution.rounds, options.stop_after.value_or(config.evolution.rounds));
  bool reuse = true;
  for (int k = 1; k <= last; ++k) {
    reuse = reuse && completed(k);
    if (reuse) {
      snap = load_checked(k);
      const auto kv = parse_kv(read_file((round_dir(k) / "round.txt").string()));
      RoundMetrics m;
      m.round = k;
      m.eval = evaluate_policy(snap.policy, peval, ecfg, &snap.verifier).report;
      m.mean_reward = kv.count("mean_reward") ? kv.at("mean_reward") : 0.0;
      m.gt_reads = kv.count("gt_reads") ? static_cast<std::uint64_t>(kv.at("gt_reads")) : 0;
      state.history.push_back(m);
      state.k = k;
    } else {
      std::string steps;
      snap = run_round(state, snap, config, data, &steps);
      const RoundMetrics& m = state.history.back();
      write_file_atomic((round_dir(k) / "steps.csv").string(), steps);
      write_file_atomic((round_dir(k) / "eval.csv").string(), eval_report_csv(m.eval, ecfg.giou_mode));
      write_file_atomic((round_dir(k) / "round.txt").string(),
                        kv_text({{"round", static_cast<double>(k)},
                                 {"mean_reward", m.mean_reward},
                                 {"gt_reads", static_cast<double>(m.gt_reads)}}));
      save_snapshot(snap, (round_dir(k) / "snapshot.snap").string());
    }
    state.snapshot_paths.push_back(rel_snapshot(k));
    rep.table.push_back(state.history.back());
    rep.snapshots.push_back(rel_snapshot(k));
  }
  write_file_atomic((root / "rounds.csv").string(), rounds_csv(rep));
  write_file_atomic((root / "report.txt").string(), evolution_report_text(rep));
  return rep;
}

}  // namespace groundloop
