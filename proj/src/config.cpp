#include "groundloop/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "groundloop/error.hpp"

namespace groundloop {
namespace {

struct Binding {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorKind::kConfig, "config: " + key + " = '" + value + "' is not " + want);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& s, const char* want) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) bad_value(key, s, want);
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(key, s, "a boolean (true/false)");
}


// Field accessors take a projection returning a reference into RunConfig.
template <typename Proj>
Binding dbl(std::string name, std::string help, Proj proj, bool published = false) {
  const std::string n = name;
  return {{std::move(name), std::move(help), published},
          [proj](const RunConfig& c) { return fmt(proj(const_cast<RunConfig&>(c))); },
          [proj, n](RunConfig& c, const std::string& v) {
            proj(c) = parse_number<double>(n, v, "a number");
          }};
}

template <typename Proj>
Binding integer(std::string name, std::string help, Proj proj, bool published = false) {
  const std::string n = name;
  return {{std::move(name), std::move(help), published},
          [proj](const RunConfig& c) { return std::to_string(proj(const_cast<RunConfig&>(c))); },
          [proj, n](RunConfig& c, const std::string& v) {
            proj(c) = parse_number<std::remove_reference_t<decltype(proj(c))>>(n, v, "an integer");
          }};
}

template <typename Proj>
Binding boolean(std::string name, std::string help, Proj proj) {
  const std::string n = name;
  return {{std::move(name), std::move(help), false},
          [proj](const RunConfig& c) { return std::string(proj(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [proj, n](RunConfig& c, const std::string& v) { proj(c) = parse_bool(n, v); }};
}

std::vector<Binding> make_bindings() {
  std::vector<Binding> b;
  b.push_back(integer("run.seed", "master seed; every stream derives from it",
                      [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
  b.push_back({{"run.dir", "run directory for emitted artifacts", false},
               [](const RunConfig& c) { return c.run_dir; },
               [](RunConfig& c, const std::string& v) {
                 if (v.empty()) bad_value("run.dir", v, "a path");
                 c.run_dir = v;
               }});
  b.push_back(integer("run.workers", "worker threads; never changes results",
                      [](RunConfig& c) -> int& { return c.workers; }));

  b.push_back(integer("scene.width", "grid width in cells", [](RunConfig& c) -> int& { return c.scene.width; }));
  b.push_back(integer("scene.height", "grid height in cells", [](RunConfig& c) -> int& { return c.scene.height; }));
  b.push_back(integer("scene.min_objects", "fewest objects per scene",
                      [](RunConfig& c) -> int& { return c.scene.min_objects; }));
  b.push_back(integer("scene.max_objects", "most objects per scene",
                      [](RunConfig& c) -> int& { return c.scene.max_objects; }));
  b.push_back(integer("scene.min_side", "shortest object side in cells",
                      [](RunConfig& c) -> int& { return c.scene.min_side; }));
  b.push_back(integer("scene.max_side", "longest object side in cells (capped at half the grid)",
                      [](RunConfig& c) -> int& { return c.scene.max_side; }));
  b.push_back(integer("scene.align", "object corners and sides snap to multiples of this",
                      [](RunConfig& c) -> int& { return c.scene.align; }));
  const char* obj_names[4] = {"field", "building", "playground", "parking"};
  for (int i = 0; i < 4; ++i)
    b.push_back(dbl(std::string("scene.object_mix.") + obj_names[i], "relative draw weight",
                    [i](RunConfig& c) -> double& { return c.scene.object_mix[static_cast<std::size_t>(i)]; }));
  b.push_back(dbl("scene.water_prob", "probability that a scene has a water body",
                  [](RunConfig& c) -> double& { return c.scene.water_prob; }));
  b.push_back(integer("scene.max_roads", "upper bound on full-span roads",
                      [](RunConfig& c) -> int& { return c.scene.max_roads; }));
  b.push_back(dbl("scene.query_mix.direct", "relative weight of direct queries",
                  [](RunConfig& c) -> double& { return c.scene.query_mix.direct; }));
  b.push_back(dbl("scene.query_mix.relational", "relative weight of largest-of-category queries",
                  [](RunConfig& c) -> double& { return c.scene.query_mix.relational; }));
  b.push_back(dbl("scene.query_mix.implicit", "relative weight of road/water context queries",
                  [](RunConfig& c) -> double& { return c.scene.query_mix.implicit; }));
  b.push_back(dbl("scene.largest_margin", "largest object must exceed the runner-up by this factor",
                  [](RunConfig& c) -> double& { return c.scene.largest_margin; }));
  b.push_back(integer("scene.context_gap", "cells non-answers must stay clear of a context trigger",
                      [](RunConfig& c) -> int& { return c.scene.context_gap; }));
  b.push_back(integer("scene.max_retries", "scene regeneration budget per sample",
                      [](RunConfig& c) -> int& { return c.scene.max_retries; }));
  b.push_back(integer("scene.train_seed_start", "first training sample seed",
                      [](RunConfig& c) -> std::uint64_t& { return c.train_scenes.start; }));
  b.push_back(integer("scene.train_count", "training samples",
                      [](RunConfig& c) -> int& { return c.train_scenes.count; }));
  b.push_back(integer("scene.eval_seed_start", "first evaluation sample seed",
                      [](RunConfig& c) -> std::uint64_t& { return c.eval_scenes.start; }));
  b.push_back(integer("scene.eval_count", "evaluation samples",
                      [](RunConfig& c) -> int& { return c.eval_scenes.count; }));

  b.push_back(integer("policy.hidden", "hidden units", [](RunConfig& c) -> int& { return c.policy.hidden; }));
  b.push_back(integer("policy.bins", "coordinate bins per axis", [](RunConfig& c) -> int& { return c.policy.bins; }));
  b.push_back(dbl("policy.init_scale", "uniform init half-width", [](RunConfig& c) -> double& { return c.init_scale; }));

  b.push_back(integer("grpo.group_size", "generations per query", [](RunConfig& c) -> int& { return c.grpo.group_size; }, true));
  b.push_back(dbl("grpo.temperature", "sampling temperature", [](RunConfig& c) -> double& { return c.grpo.temperature; }, true));
  b.push_back(integer("grpo.epochs", "sweeps over the training set", [](RunConfig& c) -> int& { return c.grpo.epochs; }, true));
  b.push_back(integer("grpo.batch_size", "samples per update", [](RunConfig& c) -> int& { return c.grpo.batch_size; }));
  b.push_back(dbl("grpo.learning_rate", "gradient-descent step size",
                  [](RunConfig& c) -> double& { return c.grpo.learning_rate; }));
  b.push_back(dbl("grpo.clip_eps", "ratio clip", [](RunConfig& c) -> double& { return c.grpo.clip_eps; }));
  b.push_back(dbl("grpo.kl_coef", "reference KL weight", [](RunConfig& c) -> double& { return c.grpo.kl_coef; }));
  b.push_back(dbl("grpo.area_lambda", "area penalty slope", [](RunConfig& c) -> double& { return c.grpo.area_lambda; }));
  b.push_back(dbl("grpo.area_tau", "area ratio the penalty starts at", [](RunConfig& c) -> double& { return c.grpo.area_tau; }));
  b.push_back(boolean("grpo.area_penalty", "apply the area penalty", [](RunConfig& c) -> bool& { return c.grpo.area_penalty; }));
  b.push_back(dbl("grpo.crop_alpha", "context padding of reward crops", [](RunConfig& c) -> double& { return c.grpo.crop_alpha; }, true));
  b.push_back(dbl("grpo.invalid_reward", "reward for malformed boxes",
                  [](RunConfig& c) -> double& { return c.grpo.invalid_reward; }));
  b.push_back({{"grpo.reward_mode", "intrinsic-oracle, intrinsic-snapshot or extrinsic-iou", false},
               [](const RunConfig& c) { return std::string(reward_mode_name(c.grpo.reward_mode)); },
               [](RunConfig& c, const std::string& v) {
                 const auto m = parse_reward_mode(v);
                 if (!m) bad_value("grpo.reward_mode", v, "a reward mode");
                 c.grpo.reward_mode = *m;
               }});
  b.push_back(dbl("grpo.oracle_reliability", "teacher reliability rho",
                  [](RunConfig& c) -> double& { return c.grpo.oracle_reliability; }));
  b.push_back(dbl("grpo.adv_std_floor", "advantage std floor", [](RunConfig& c) -> double& { return c.grpo.adv_std_floor; }));
  b.push_back(boolean("grpo.record_wallclock", "write step timings (breaks byte-identical CSVs)",
                      [](RunConfig& c) -> bool& { return c.grpo.record_wallclock; }));

  b.push_back(integer("verifier.train_scenes", "pre-training scenes",
                      [](RunConfig& c) -> int& { return c.verifier.train_scenes; }));
  b.push_back(integer("verifier.heldout_scenes", "held-out scenes for pair accuracy",
                      [](RunConfig& c) -> int& { return c.verifier.heldout_scenes; }));
  b.push_back(integer("verifier.pairs_per_scene", "labelled crops per scene",
                      [](RunConfig& c) -> int& { return c.verifier.pairs_per_scene; }));
  b.push_back(integer("verifier.steps", "full-batch descent steps", [](RunConfig& c) -> int& { return c.verifier.steps; }));
  b.push_back(dbl("verifier.learning_rate", "descent step size",
                  [](RunConfig& c) -> double& { return c.verifier.learning_rate; }));
  b.push_back(dbl("verifier.jitter", "positive-crop side jitter", [](RunConfig& c) -> double& { return c.verifier.jitter; }));
  b.push_back(dbl("verifier.crop_margin", "padding of pre-training crops",
                  [](RunConfig& c) -> double& { return c.verifier.crop_margin; }));
  b.push_back(dbl("verifier.random_max_iou", "random negatives stay below this IoU with the target",
                  [](RunConfig& c) -> double& { return c.verifier.random_max_iou; }));
  b.push_back(dbl("verifier.mix.positive", "share of positive pairs",
                  [](RunConfig& c) -> double& { return c.verifier.mix.positive; }));
  b.push_back(dbl("verifier.mix.other_object", "share of wrong-object negatives",
                  [](RunConfig& c) -> double& { return c.verifier.mix.other_object; }));
  b.push_back(dbl("verifier.mix.random_box", "share of random-box negatives",
                  [](RunConfig& c) -> double& { return c.verifier.mix.random_box; }));
  b.push_back(dbl("verifier.query_mix.direct", "pre-training weight of direct queries",
                  [](RunConfig& c) -> double& { return c.verifier_query_mix.direct; }));
  b.push_back(dbl("verifier.query_mix.relational", "pre-training weight of relational queries",
                  [](RunConfig& c) -> double& { return c.verifier_query_mix.relational; }));
  b.push_back(dbl("verifier.query_mix.implicit", "pre-training weight of implicit queries",
                  [](RunConfig& c) -> double& { return c.verifier_query_mix.implicit; }));

  b.push_back(integer("evolution.rounds", "self-evolution rounds K",
                      [](RunConfig& c) -> int& { return c.evolution.rounds; }));
  b.push_back(boolean("evolution.verifier_refresh", "re-fit the verifier head every round",
                      [](RunConfig& c) -> bool& { return c.evolution.verifier_refresh; }));
  b.push_back(boolean("evolution.reinit_policy", "start every round from fresh weights",
                      [](RunConfig& c) -> bool& { return c.evolution.reinit_policy; }));

  b.push_back(boolean("eval.sampled_decode", "sample instead of greedy decoding",
                      [](RunConfig& c) -> bool& { return c.eval.sampled_decode; }));
  b.push_back(dbl("eval.temperature", "temperature for sampled decoding",
                  [](RunConfig& c) -> double& { return c.eval.temperature; }));
  b.push_back(dbl("eval.iou_threshold", "hit threshold", [](RunConfig& c) -> double& { return c.eval.iou_threshold; }));
  b.push_back({{"eval.giou_mode", "mean-iou or mean-generalized-iou", false},
               [](const RunConfig& c) { return std::string(giou_mode_name(c.eval.giou_mode)); },
               [](RunConfig& c, const std::string& v) {
                 const auto m = parse_giou_mode(v);
                 if (!m) bad_value("eval.giou_mode", v, "a gIoU mode");
                 c.eval.giou_mode = *m;
               }});
  b.push_back(integer("eval.seed", "stream for sampled decoding",
                      [](RunConfig& c) -> std::uint64_t& { return c.eval.seed; }));
  return b;
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> b = make_bindings();
  return b;
}

const Binding* lookup_binding(const std::string& key) {
  for (const auto& b : bindings())
    if (b.key.name == key) return &b;
  return nullptr;
}

const Binding& find_binding(const std::string& key) {
  if (const Binding* b = lookup_binding(key)) return *b;
  throw Error(ErrorKind::kConfig, "config: unknown key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto z = s.find_last_not_of(" \t\r");
  return s.substr(a, z - a + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& b : bindings()) k.push_back(b.key);
    return k;
  }();
  return keys;
}

RunConfig default_config() { return RunConfig{}; }

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  find_binding(key).set(config, value);
}

std::string get_config_value(const RunConfig& config, const std::string& key) {
  return find_binding(key).get(config);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw Error(ErrorKind::kConfig, where + "malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::kConfig, where + "expected key = value");
    std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw Error(ErrorKind::kConfig, where + "empty key");
    // A fully qualified key wins over the current section.
    if (!section.empty() && !lookup_binding(key)) key = section + "." + key;
    if (!seen.insert(key).second) throw Error(ErrorKind::kConfig, where + "duplicate key '" + key + "'");
    try {
      set_config_value(base, key, value);
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, where + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "config: cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

void validate(const RunConfig& c) {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::kConfig, "config: " + what);
  };
  check(c.workers >= 1, "run.workers must be >= 1");
  check(c.scene.width >= 8 && c.scene.height >= 8, "scene grid must be at least 8x8");
  check(c.scene.min_objects >= 1 && c.scene.max_objects >= c.scene.min_objects,
        "scene object counts need 1 <= min <= max");
  check(c.scene.min_side >= 1 && c.scene.max_side >= c.scene.min_side, "scene sides need 1 <= min <= max");
  check(c.scene.align >= 1, "scene.align must be >= 1");
  const auto& q = c.scene.query_mix;
  check(q.direct >= 0 && q.relational >= 0 && q.implicit >= 0 && q.direct + q.relational + q.implicit > 0,
        "scene.query_mix weights must be nonnegative with a positive sum");
  const auto& vq = c.verifier_query_mix;
  check(vq.direct >= 0 && vq.relational >= 0 && vq.implicit >= 0 && vq.direct + vq.relational + vq.implicit > 0,
        "verifier.query_mix weights must be nonnegative with a positive sum");
  check(c.train_scenes.count >= 1 && c.eval_scenes.count >= 1, "scene counts must be >= 1");
  const auto t0 = c.train_scenes.start, t1 = t0 + static_cast<std::uint64_t>(c.train_scenes.count);
  const auto e0 = c.eval_scenes.start, e1 = e0 + static_cast<std::uint64_t>(c.eval_scenes.count);
  check(t1 <= e0 || e1 <= t0, "training and evaluation seed ranges overlap");
  check(c.policy.hidden >= 1 && c.policy.bins >= 2, "policy needs hidden >= 1 and bins >= 2");
  check(c.init_scale >= 0.0, "policy.init_scale must be >= 0");
  check(c.verifier.train_scenes >= 1 && c.verifier.heldout_scenes >= 1 && c.verifier.pairs_per_scene >= 1 &&
            c.verifier.steps >= 0 && c.verifier.learning_rate >= 0,
        "verifier budget values out of range");
  check(c.verifier.crop_margin >= 0.0, "verifier.crop_margin must be >= 0");
  check(c.evolution.rounds >= 1, "evolution.rounds must be >= 1");
  check(c.eval.temperature > 0.0, "eval.temperature must be positive");
  check(c.eval.iou_threshold >= 0.0 && c.eval.iou_threshold <= 1.0, "eval.iou_threshold outside [0,1]");
  validate(grpo_config(c));
}

std::string resolved_config_text(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& b : bindings()) {
    const auto dot = b.key.name.find('.');
    const std::string sec = b.key.name.substr(0, dot);
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += b.key.name.substr(dot + 1) + " = " + b.get(config) + "\n";
  }
  return out;
}

// Location and worker count never change results, so they stay out of the
// digest: a moved run directory still resumes and snapshots match across
// worker counts.
std::uint64_t config_digest(const RunConfig& config) {
  RunConfig c = config;
  c.run_dir = default_config().run_dir;
  c.workers = 1;
  return fnv1a64(resolved_config_text(c));
}

std::string config_reference() {
  const RunConfig d = default_config();
  std::string out;
  for (const auto& b : bindings()) {
    out += "  " + b.key.name + " = " + b.get(d);
    if (b.key.published_default) out += "  [published]";
    out += "\n      " + b.key.help + "\n";
  }
  return out;
}

GrpoConfig grpo_config(const RunConfig& c) {
  GrpoConfig g = c.grpo;
  g.workers = c.workers;
  return g;
}

PretrainConfig pretrain_config(const RunConfig& c) {
  PretrainConfig p = c.verifier;
  p.scenes = c.scene;
  p.scenes.query_mix = c.verifier_query_mix;
  p.workers = c.workers;
  return p;
}

EvalConfig eval_config(const RunConfig& c) {
  EvalConfig e = c.eval;
  e.crop_alpha = c.grpo.crop_alpha;
  e.workers = c.workers;
  return e;
}

}  // namespace groundloop
