#pragma once

// Group-relative policy optimization over verifier rewards.

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "groundloop/policy.hpp"
#include "groundloop/scene.hpp"
#include "groundloop/verifier.hpp"

namespace groundloop {

enum class RewardMode : std::uint8_t {
  kIntrinsicOracle,    // coverage oracle (external teacher), reliability rho
  kIntrinsicSnapshot,  // frozen learned head from a snapshot
  kExtrinsicIou,       // supervised baseline: IoU with ground truth
};

const char* reward_mode_name(RewardMode m);
std::optional<RewardMode> parse_reward_mode(const std::string& s);

struct GrpoConfig {
  int group_size = 4;
  double temperature = 0.9;
  int epochs = 10;
  int batch_size = 8;
  double learning_rate = 0.2;
  double clip_eps = 0.2;
  double kl_coef = 0.04;
  double area_lambda = 1.0;
  double area_tau = 0.25;
  bool area_penalty = true;
  double crop_alpha = 0.15;
  double invalid_reward = -1.0;
  RewardMode reward_mode = RewardMode::kIntrinsicOracle;
  double oracle_reliability = 1.0;
  double adv_std_floor = 1e-8;
  int workers = 1;
  // Wall-clock timings make step CSVs non-reproducible, so they are opt-in.
  bool record_wallclock = false;
};

// Throws ErrorKind::kConfig on out-of-range values.
void validate(const GrpoConfig& config);

struct RewardBreakdown {
  double s = 0.0;
  double area_penalty = 0.0;
  bool invalid = false;
  double r = 0.0;
};

// s - lambda * max(0, area(box) - tau) for valid boxes; r_invalid otherwise.
RewardBreakdown compose_reward(double s, const BBox& box, double lambda, double tau,
                               double r_invalid, bool penalty_enabled = true);

// IoU with ground truth; r_invalid for invalid boxes.
double extrinsic_reward(const BBox& box, const BBox& gt, double r_invalid);

// (r_i - mean) / max(population std, floor); exactly zero when all rewards
// are equal.
std::vector<double> group_advantages(std::span<const double> rewards, double std_floor);

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
double clipped_objective_term(double ratio, double advantage, double eps);

// exp(d) - d - 1 with d = logprob_ref - logprob_current; nonnegative.
double kl_term(double logprob_ref, double logprob_current);

// Policy input prepared once per sample.
struct PreparedSample {
  const SceneSample* sample = nullptr;
  std::vector<double> input;
  std::array<double, Query::kEmbeddingSize> query{};
};

std::vector<PreparedSample> prepare_samples(std::span<const SceneSample> samples, int workers = 1);

struct TraceInput {
  const std::vector<double>* input = nullptr;
  GenerationTrace trace;
};

double kl_estimate(const PolicyParams& params, const PolicyParams& ref,
                   std::span<const TraceInput> batch);

// Where rewards come from during a step.
struct RewardSource {
  RewardMode mode = RewardMode::kIntrinsicOracle;
  const FrozenVerifier* verifier = nullptr;  // required for kIntrinsicSnapshot
};

// Throws ErrorKind::kConfig when the mode and verifier disagree.
void check_reward_source(const GrpoConfig& config, const RewardSource& source);

// Scores one raw box for one sample under the configured reward.
RewardBreakdown score_box(const PreparedSample& ps, const BBox& box, const GrpoConfig& config,
                          const RewardSource& source, Stream& rng);

struct GroupSample {
  std::vector<GenerationTrace> traces;
  std::vector<BBox> boxes;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;
  std::vector<double> ref_logprobs;
  double entropy_bits = 0.0;
};

// Per-sample rollout result: the group and this sample's share of the loss
// gradient (already scaled by 1 / total generations in the batch).
struct RolloutResult {
  GroupSample group;
  PolicyParams grad;
  double loss = 0.0;
  double kl_sum = 0.0;
};

// One sample's rollout, scoring, advantages and gradient. Pure given inputs.
RolloutResult rollout_sample(const PolicyParams& params, const PolicyParams& ref,
                             const PreparedSample& ps, const GrpoConfig& config,
                             const RewardSource& source, Stream rng, int batch_generations);

// Serial reference and OpenMP kernel over a batch; results are index-aligned
// and bit-identical.
std::vector<RolloutResult> rollout_batch_serial(const PolicyParams& params, const PolicyParams& ref,
                                                std::span<const PreparedSample* const> batch,
                                                const GrpoConfig& config, const RewardSource& source,
                                                const Stream& step_stream);
std::vector<RolloutResult> rollout_batch_parallel(const PolicyParams& params, const PolicyParams& ref,
                                                  std::span<const PreparedSample* const> batch,
                                                  const GrpoConfig& config, const RewardSource& source,
                                                  const Stream& step_stream, int workers);

struct StepStats {
  std::int64_t step = 0;
  double mean_reward = 0.0;
  double mean_s = 0.0;
  double invalid_frac = 0.0;
  double kl = 0.0;
  double gen_entropy_bits = 0.0;
  double loss = 0.0;
  double wallclock_ms = 0.0;
};

// One update: rollouts, loss, and a plain gradient-descent step on `params`.
StepStats grpo_step(PolicyParams& params, const PolicyParams& ref,
                    std::span<const PreparedSample* const> batch, const GrpoConfig& config,
                    const RewardSource& source, const Stream& step_stream);

using StepCallback = std::function<void(const StepStats&)>;

// `epochs` sweeps over `train` in shuffled batches. Opens a TrainingScope.
// Step numbering continues from `first_step`; returns the next free index.
std::int64_t train_policy(PolicyParams& params, const PolicyParams& ref,
                          std::span<const PreparedSample> train, const GrpoConfig& config,
                          const RewardSource& source, const Stream& stream,
                          const StepCallback& on_step, std::int64_t first_step = 0);

// Step CSV: step,mean_reward,mean_s,invalid_frac,kl,gen_entropy_bits,wallclock_ms
std::string step_csv_header();
std::string step_csv_row(const StepStats& s);

}  // namespace groundloop
