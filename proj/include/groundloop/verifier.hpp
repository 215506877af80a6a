#pragma once

// Crop verifiers: the noisy coverage oracle (external teacher) and the
// learned bilinear logistic head, plus the head's pre-training protocol.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "groundloop/geometry.hpp"
#include "groundloop/rng.hpp"
#include "groundloop/scene.hpp"

namespace groundloop {

enum class ScoreSource : std::uint8_t { kOracle, kLearned, kSnapshot };

struct VerifierScore {
  double s = 0.0;
  ScoreSource source = ScoreSource::kLearned;
  double reliability = 1.0;  // oracle only
  int round = -1;            // snapshot only
};

// Bilinear logistic head: s = logistic(f~^T W q~), where f~ is the crop
// feature vector with a trailing 1 and q~ the query embedding with a trailing
// 1. The trailing row and column hold the purely linear terms, and
// W[kRows-1][kCols-1] is the bias.
struct VerifierParams {
  static constexpr int kRows = kCropFeatureSize + 1;
  static constexpr int kCols = Query::kEmbeddingSize + 1;
  static constexpr int kSize = kRows * kCols;

  std::vector<double> weights = std::vector<double>(kSize, 0.0);

  double& at(int row, int col) { return weights[static_cast<std::size_t>(row * kCols + col)]; }
  double at(int row, int col) const { return weights[static_cast<std::size_t>(row * kCols + col)]; }
  double& bias() { return at(kRows - 1, kCols - 1); }
  double bias() const { return at(kRows - 1, kCols - 1); }

  friend bool operator==(const VerifierParams&, const VerifierParams&) = default;
};

double logistic(double z);

double verifier_logit(const VerifierParams& params, std::span<const double> crop_feats,
                      std::span<const double> query_embedding);

VerifierScore learned_verify(const VerifierParams& params, std::span<const double> crop_feats,
                             std::span<const double> query_embedding);

// d s / d W, laid out like VerifierParams::weights.
std::vector<double> verifier_score_gradient(const VerifierParams& params,
                                            std::span<const double> crop_feats,
                                            std::span<const double> query_embedding);

// Coverage |gt ∩ crop| / |gt|, replaced by a uniform draw with probability
// 1 - reliability. Reads ground truth through the oracle channel.
VerifierScore oracle_verify(const SceneSample& sample, const CropRegion& crop,
                            double reliability, Stream& rng);

// Binary entropy in bits with 0 log 0 := 0.
double verifier_entropy(double s);

// A verifier frozen for the lifetime of a training round.
class FrozenVerifier {
 public:
  FrozenVerifier(VerifierParams params, int round) : params_(std::move(params)), round_(round) {}

  VerifierScore score(std::span<const double> crop_feats,
                      std::span<const double> query_embedding) const;
  const VerifierParams& params() const { return params_; }
  int round() const { return round_; }

 private:
  VerifierParams params_;
  int round_;
};

// ---------------------------------------------------------------------------
// Pre-training on generator-labelled (crop, query) pairs.

struct PairMix {
  double positive = 0.5;
  double other_object = 0.25;
  double random_box = 0.25;
};

struct PretrainConfig {
  SceneConfig scenes;       // typically a mix of all query kinds
  int train_scenes = 600;
  int heldout_scenes = 200;
  int pairs_per_scene = 8;
  int steps = 3000;
  double learning_rate = 0.5;
  double jitter = 0.10;     // per-side jitter as a fraction of the side length
  double crop_margin = 0.15;
  double random_max_iou = 0.10;
  PairMix mix;
  int workers = 1;
};

struct LabeledPair {
  std::array<double, kCropFeatureSize> features{};
  std::array<double, Query::kEmbeddingSize> query{};
  int label = 0;
};

// Pairs from `scene_count` scenes drawn from the stream. Reads ground truth
// inside a PretrainScope.
std::vector<LabeledPair> make_verifier_pairs(const PretrainConfig& config, Stream stream,
                                             int scene_count);

double pair_loss(const VerifierParams& params, std::span<const LabeledPair> pairs);
double pair_accuracy(const VerifierParams& params, std::span<const LabeledPair> pairs);

struct PretrainResult {
  VerifierParams params;
  std::vector<double> loss_history;  // full-batch loss before each step
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
};

// Full-batch gradient descent on mean binary cross-entropy.
PretrainResult pretrain_verifier(const PretrainConfig& config, std::uint64_t seed);

}  // namespace groundloop
