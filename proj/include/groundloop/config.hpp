#pragma once

// Run configuration: every tunable key of every module under a namespaced
// section, parsed from a flat sectioned key=value text format.
//
// Grammar (one item per line, surrounding blanks ignored):
//   # comment
//   [section]
//   key = value          -> "section.key"
//   section.key = value  -> allowed anywhere, ignores the current section
// Unknown keys, duplicate keys and malformed values are configuration errors.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "groundloop/grpo.hpp"
#include "groundloop/metrics.hpp"
#include "groundloop/policy.hpp"
#include "groundloop/scene.hpp"
#include "groundloop/verifier.hpp"

namespace groundloop {

struct SeedRange {
  std::uint64_t start = 0;
  int count = 0;
};

struct EvolutionConfig {
  int rounds = 3;
  // Re-fit the verifier head at each round instead of freezing round 0's.
  bool verifier_refresh = false;
  // Start each round from fresh weights instead of the previous round's.
  bool reinit_policy = false;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string run_dir = "runs/default";
  int workers = 1;

  SceneConfig scene;
  SeedRange train_scenes{0, 200};
  SeedRange eval_scenes{1000000, 200};

  PolicyShape policy;
  double init_scale = 0.01;

  GrpoConfig grpo;
  PretrainConfig verifier;
  QueryMix verifier_query_mix{1.0, 1.0, 1.0};
  EvolutionConfig evolution;
  EvalConfig eval;
};

struct ConfigKey {
  std::string name;
  std::string help;
  bool published_default = false;  // default taken from the published setup
};

// All keys in documentation order.
const std::vector<ConfigKey>& config_keys();

RunConfig default_config();

// Sets one key from its textual value. Throws ErrorKind::kConfig.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

// Applies a config text on top of `base`.
RunConfig parse_config(const std::string& text, RunConfig base = default_config());
RunConfig load_config(const std::string& path, RunConfig base = default_config());

// Cross-field checks (seed ranges disjoint, module validators). Throws
// ErrorKind::kConfig.
void validate(const RunConfig& config);

// Every key with its effective value, in the parseable format.
std::string resolved_config_text(const RunConfig& config);
std::uint64_t config_digest(const RunConfig& config);

// Key reference: name, default, provenance and help for every key.
std::string config_reference();

// Module views with the shared worker count applied.
GrpoConfig grpo_config(const RunConfig& config);
PretrainConfig pretrain_config(const RunConfig& config);
EvalConfig eval_config(const RunConfig& config);

}  // namespace groundloop
