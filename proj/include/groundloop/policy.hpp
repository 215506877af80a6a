#pragma once

// The box generator: a one-hidden-layer network over [scene features, query
// embedding] with five independent categorical heads (one intent token and
// four coordinate tokens x1, y1, x2, y2).

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "groundloop/geometry.hpp"
#include "groundloop/rng.hpp"
#include "groundloop/scene.hpp"

namespace groundloop {

inline constexpr int kNumHeads = 5;  // intent, x1, y1, x2, y2
inline constexpr int kPolicyInputSize = kSceneFeatureSize + Query::kEmbeddingSize;

struct PolicyShape {
  int input = kPolicyInputSize;
  int hidden = 32;
  int intent = kNumCategories;
  int bins = 32;

  int head_size(int head) const { return head == 0 ? intent : bins; }
  std::size_t in_weights_offset() const { return 0; }
  std::size_t in_bias_offset() const { return static_cast<std::size_t>(hidden) * input; }
  std::size_t head_weights_offset(int head) const;
  std::size_t head_bias_offset(int head) const;
  std::size_t size() const;

  friend bool operator==(const PolicyShape&, const PolicyShape&) = default;
};

// Flat parameter block. Gradients share this type and layout.
struct PolicyParams {
  PolicyShape shape;
  std::vector<double> data;

  PolicyParams() = default;
  explicit PolicyParams(const PolicyShape& s) : shape(s), data(s.size(), 0.0) {}

  // Row-major [hidden x input].
  std::span<double> in_weights() { return {data.data() + shape.in_weights_offset(), in_bias_size()}; }
  std::span<const double> in_weights() const { return {data.data() + shape.in_weights_offset(), in_bias_size()}; }
  std::span<double> in_bias() { return {data.data() + shape.in_bias_offset(), static_cast<std::size_t>(shape.hidden)}; }
  std::span<const double> in_bias() const { return {data.data() + shape.in_bias_offset(), static_cast<std::size_t>(shape.hidden)}; }
  // Row-major [head_size x hidden].
  std::span<double> head_weights(int h);
  std::span<const double> head_weights(int h) const;
  std::span<double> head_bias(int h);
  std::span<const double> head_bias(int h) const;

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  std::size_t in_bias_size() const { return static_cast<std::size_t>(shape.hidden) * shape.input; }
};

// i.i.d. uniform in [-scale, scale], deterministic per seed.
PolicyParams init_params(const PolicyShape& shape, std::uint64_t seed, double scale);

// Category channels the query attends to: its target, plus road or water
// when the relation refers to them.
std::array<bool, kNumCategories> query_channels(const Query& query);

// Policy input: scene features with channels outside query_channels zeroed,
// followed by the query embedding.
std::vector<double> policy_input(std::span<const double> scene_feats, const Query& query);

// Hidden activations and per-head logits for one input.
struct PolicyForward {
  std::vector<double> hidden;
  std::array<std::vector<double>, kNumHeads> logits;
};

PolicyForward forward(const PolicyParams& params, std::span<const double> input);

struct GenerationTrace {
  int intent = 0;
  std::array<int, 4> coords{};  // x1, y1, x2, y2 bin indices
  // Log-probability of each token under the temperature-1 distribution.
  std::array<double, kNumHeads> token_logprobs{};
  double temperature = 1.0;

  int token(int head) const { return head == 0 ? intent : coords[static_cast<std::size_t>(head - 1)]; }
  double logprob() const;
};

// Bin centre (token + 0.5) / bins.
double decode_coordinate(int token, int bins);
// Bin holding v in [0, 1]; 1.0 maps to the last bin.
int encode_coordinate(double v, int bins);
// [x1, y1, x2, y2] in token order; never reordered, so it may be invalid.
BBox decode_box(const GenerationTrace& trace, int bins);

// Numerically stable softmax of logits / temperature.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);
std::vector<double> log_softmax(std::span<const double> logits);
// Entropy in bits of softmax(logits / temperature).
double head_entropy_bits(std::span<const double> logits, double temperature = 1.0);
// First index of the maximum.
int argmax(std::span<const double> values);

struct Generation {
  GenerationTrace trace;
  BBox box;
};

// Draws every head from softmax(logits / temperature). Requires temperature > 0.
Generation sample_generation(const PolicyParams& params, const PolicyForward& fwd,
                             double temperature, Stream& rng);
Generation sample_generation(const PolicyParams& params, std::span<const double> input,
                             double temperature, Stream& rng);
// Per-head argmax, the zero-temperature limit.
Generation greedy_generation(const PolicyParams& params, const PolicyForward& fwd);
Generation greedy_generation(const PolicyParams& params, std::span<const double> input);

double logprob(const PolicyParams& params, std::span<const double> input,
               const GenerationTrace& trace);
double logprob(const PolicyForward& fwd, const GenerationTrace& trace);

// Sum of per-head entropies, in bits, at temperature 1.
double generation_entropy(const PolicyParams& params, std::span<const double> input);
double generation_entropy(const PolicyForward& fwd);

PolicyParams logprob_gradient(const PolicyParams& params, std::span<const double> input,
                              const GenerationTrace& trace);

// Accumulates sum_g weights[g] * grad logprob(traces[g]) into `grad`, sharing
// a single backward pass across the group.
void accumulate_weighted_gradient(const PolicyParams& params, std::span<const double> input,
                                  const PolicyForward& fwd,
                                  std::span<const GenerationTrace> traces,
                                  std::span<const double> weights, PolicyParams& grad);

}  // namespace groundloop
