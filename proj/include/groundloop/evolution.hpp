#pragma once

// Self-evolution: K sequential rounds, each rewarded by the frozen verifier
// carried in the previous round's snapshot, plus snapshot persistence.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "groundloop/config.hpp"
#include "groundloop/metrics.hpp"
#include "groundloop/policy.hpp"
#include "groundloop/verifier.hpp"

namespace groundloop {

inline constexpr const char* kSnapshotVersion = "snap-v1";

struct PolicySnapshot {
  int round = 0;
  PolicyParams policy;
  VerifierParams verifier;
  std::uint64_t config_digest = 0;
  std::string seed_chain;  // how the streams behind this snapshot were derived

  friend bool operator==(const PolicySnapshot&, const PolicySnapshot&) = default;
};

// Text container: version line, header fields, decimal arrays (%.17g) and a
// trailing FNV-1a digest of everything above it.
std::string serialize_snapshot(const PolicySnapshot& s);
// Throws SnapshotVersionError, then SnapshotDigestError, in that order.
PolicySnapshot parse_snapshot(const std::string& text);
// Atomic: writes a sibling temp file and renames it into place.
void save_snapshot(const PolicySnapshot& s, const std::string& path);
PolicySnapshot load_snapshot(const std::string& path);

// Writes `contents` to `path` through a temp file and rename.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

PolicySnapshot bootstrap_round0(const RunConfig& config, std::uint64_t seed,
                                PretrainResult* pretrain = nullptr);

FrozenVerifier make_round_verifier(const PolicySnapshot& prev);

struct RoundMetrics {
  int round = 0;
  EvalReport eval;
  double mean_reward = 0.0;  // over the round's updates; 0 for round 0
  std::uint64_t gt_reads = 0;

  friend bool operator==(const RoundMetrics&, const RoundMetrics&) = default;
};

struct EvolutionState {
  int k = 0;  // last completed round
  int total_rounds = 0;
  std::vector<RoundMetrics> history;  // rounds 1..k
  std::vector<std::string> snapshot_paths;
};

struct RoundData {
  std::span<const PreparedSample> train;
  std::span<const PreparedSample> eval;
};

// Trains round k = state.k + 1 from `prev` and appends its metrics. Step rows
// go to `steps_csv` when given.
PolicySnapshot run_round(EvolutionState& state, const PolicySnapshot& prev, const RunConfig& config,
                         const RoundData& data, std::string* steps_csv = nullptr);

struct TrainResult {
  PolicySnapshot snapshot;  // round = start.round + 1
  EvalReport eval;
  std::string steps_csv;
  double mean_reward = 0.0;
  std::uint64_t gt_reads = 0;
};

// One training run under the configured reward mode, continuing from
// `start`. The snapshot's verifier is carried through and, in
// intrinsic-snapshot mode, supplies the rewards.
TrainResult train_run(const RunConfig& config, const PolicySnapshot& start, const RoundData& data);

struct EvolutionReport {
  int rounds = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
  double verifier_heldout_accuracy = 0.0;
  std::vector<RoundMetrics> table;  // rounds 0..K
  std::vector<std::string> snapshots;

  friend bool operator==(const EvolutionReport&, const EvolutionReport&) = default;
};

std::string evolution_report_text(const EvolutionReport& r);
std::string rounds_csv(const EvolutionReport& r);

struct EvolutionOptions {
  // Reuse completed rounds found under the run directory.
  bool resume = false;
  // Stop after this many rounds even if more are configured (tests use it
  // to simulate an interruption).
  std::optional<int> stop_after;
};

// Runs bootstrap and K rounds under config.run_dir:
//   round-<k>/snapshot.snap, round-<k>/round.txt, round-<k>/steps.csv,
//   round-<k>/eval.csv, rounds.csv, report.txt
EvolutionReport run_evolution(const RunConfig& config, const EvolutionOptions& options = {});

}  // namespace groundloop
