#pragma once

// Two-variant ablations over seeds: area penalty on/off and strict versus
// context cropping, with per-seed cells, medians and a sign test.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groundloop/config.hpp"
#include "groundloop/grpo.hpp"
#include "groundloop/metrics.hpp"

namespace groundloop {

enum class AblationAxis : std::uint8_t { kAreaPenalty, kCropStrategy };

const char* ablation_axis_name(AblationAxis a);
std::optional<AblationAxis> parse_ablation_axis(const std::string& s);

struct AblationCell {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;  // set when training failed
  EvalReport report;
};

struct AblationTable {
  AblationAxis axis = AblationAxis::kAreaPenalty;
  RewardMode reward_mode = RewardMode::kIntrinsicOracle;
  // Index 0 is the baseline variant, index 1 the treatment.
  std::array<std::string, 2> variants;
  std::array<std::vector<AblationCell>, 2> cells;

  double median_acc(int variant) const;
  double median_giou(int variant) const;
  double median_implicit_acc(int variant) const;
  // Seeds where variant 1 strictly beats variant 0 (both cells ok).
  int wins_acc() const;
  int wins_implicit_acc() const;
  int paired_seeds() const;
};

struct AblationOptions {
  // Default: the teacher oracle for the area axis, a pre-trained verifier
  // head for the crop axis.
  std::optional<RewardMode> reward_mode;
};

// Trains both variants for every seed. The crop axis restricts training and
// evaluation scenes to relational and implicit queries. Cell failures are
// recorded, not thrown.
AblationTable ablation_run(const RunConfig& base, AblationAxis axis, const std::vector<std::uint64_t>& seeds,
                           const AblationOptions& options = {});

// One-sided sign test p-value: P(X >= wins) for X ~ Binomial(n, 1/2).
double sign_test_p(int wins, int n);

std::string ablation_csv(const AblationTable& t);
std::string ablation_summary(const AblationTable& t);

}  // namespace groundloop
