#pragma once

// Localization metrics, greedy-decode evaluation and entropy diagnostics.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "groundloop/geometry.hpp"
#include "groundloop/grpo.hpp"
#include "groundloop/policy.hpp"
#include "groundloop/scene.hpp"
#include "groundloop/verifier.hpp"

namespace groundloop {

enum class GiouMode : std::uint8_t { kMeanIou, kMeanGeneralizedIou };

const char* giou_mode_name(GiouMode m);
std::optional<GiouMode> parse_giou_mode(const std::string& s);

// Fraction of pairs whose prediction is valid and reaches IoU >= threshold.
double acc_at_iou(std::span<const BBox> predictions, std::span<const BBox> gts,
                  double threshold = 0.5);

// Mean IoU (invalid predictions count 0) or mean generalized IoU (invalid
// predictions count -1).
double giou_metric(std::span<const BBox> predictions, std::span<const BBox> gts,
                   GiouMode mode = GiouMode::kMeanIou);

struct KindBreakdown {
  int n = 0;
  double acc_at_05 = 0.0;
  double mean_iou = 0.0;
  double mean_generalized_iou = 0.0;
  friend bool operator==(const KindBreakdown&, const KindBreakdown&) = default;
};

struct EvalReport {
  int n = 0;
  double acc_at_05 = 0.0;
  double giou = 0.0;  // per the configured GiouMode
  double mean_iou = 0.0;
  double mean_generalized_iou = 0.0;
  std::array<KindBreakdown, 3> by_kind{};  // direct, relational, implicit
  double mean_gen_entropy_bits = 0.0;
  double max_ver_entropy_bits = 0.0;
  bool has_verifier = false;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EvalConfig {
  bool sampled_decode = false;  // greedy by default
  double temperature = 0.9;     // sampled decode only
  double iou_threshold = 0.5;
  GiouMode giou_mode = GiouMode::kMeanIou;
  double crop_alpha = 0.15;     // margin for the crops the verifier scores
  int workers = 1;
  std::uint64_t seed = 0;       // sampled decode only
};

struct Evaluation {
  EvalReport report;
  std::vector<BBox> predictions;
};

// Decodes one box per sample and scores it against ground truth. When a
// verifier is given, each valid decoded crop is scored and its binary entropy
// tracked; the bound H <= 1 bit is asserted.
Evaluation evaluate_policy(const PolicyParams& params, std::span<const PreparedSample> samples,
                           const EvalConfig& config, const VerifierParams* verifier = nullptr);

struct EntropyReport {
  double mean_gen_entropy_bits = 0.0;
  double max_ver_entropy_bits = 0.0;
  double ratio = 0.0;  // mean H_gen / max H_ver (inf when H_ver is 0)
  bool ver_bound_holds = true;
};

EntropyReport entropy_report(const PolicyParams& policy, const VerifierParams& verifier,
                             std::span<const PreparedSample> samples, const EvalConfig& config);

// "scope,n,acc_at_05,giou,mean_iou,mean_generalized_iou" rows for the
// aggregate and each query kind.
std::string eval_report_csv(const EvalReport& r, GiouMode mode);
std::string eval_report_summary(const EvalReport& r, GiouMode mode);

}  // namespace groundloop
