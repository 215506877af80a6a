#include "groundloop/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "groundloop/error.hpp"

namespace groundloop {

std::size_t PolicyShape::head_weights_offset(int head) const {
  std::size_t off = in_bias_offset() + static_cast<std::size_t>(hidden);
  for (int h = 0; h < head; ++h) off += static_cast<std::size_t>(head_size(h)) * (hidden + 1);
  return off;
}

std::size_t PolicyShape::head_bias_offset(int head) const {
  return head_weights_offset(head) + static_cast<std::size_t>(head_size(head)) * hidden;
}

std::size_t PolicyShape::size() const { return head_weights_offset(kNumHeads); }

std::span<double> PolicyParams::head_weights(int h) {
  return {data.data() + shape.head_weights_offset(h),
          static_cast<std::size_t>(shape.head_size(h)) * shape.hidden};
}
std::span<const double> PolicyParams::head_weights(int h) const {
  return {data.data() + shape.head_weights_offset(h),
          static_cast<std::size_t>(shape.head_size(h)) * shape.hidden};
}
std::span<double> PolicyParams::head_bias(int h) {
  return {data.data() + shape.head_bias_offset(h), static_cast<std::size_t>(shape.head_size(h))};
}
std::span<const double> PolicyParams::head_bias(int h) const {
  return {data.data() + shape.head_bias_offset(h), static_cast<std::size_t>(shape.head_size(h))};
}

PolicyParams init_params(const PolicyShape& shape, std::uint64_t seed, double scale) {
  require(scale >= 0.0, "init_params: negative scale");
  require(shape.input > 0 && shape.hidden > 0 && shape.intent > 0 && shape.bins > 0,
          "init_params: non-positive dimension");
  PolicyParams p(shape);
  if (scale == 0.0) return p;
  Stream rng = Stream(seed).split(StreamPurpose::kInit, 0);
  for (double& w : p.data) w = (2.0 * rng.uniform() - 1.0) * scale;
  return p;
}

std::array<bool, kNumCategories> query_channels(const Query& query) {
  std::array<bool, kNumCategories> keep{};
  keep[static_cast<std::size_t>(query.target)] = true;
  if (query.relation == Relation::kAdjacentToRoad)
    keep[static_cast<std::size_t>(Category::kRoad)] = true;
  if (query.relation == Relation::kNearWater)
    keep[static_cast<std::size_t>(Category::kWater)] = true;
  return keep;
}

std::vector<double> policy_input(std::span<const double> scene_feats, const Query& query) {
  require(scene_feats.size() == static_cast<std::size_t>(kSceneFeatureSize),
          "policy_input: scene feature size mismatch");
  const auto keep = query_channels(query);
  std::vector<double> x(scene_feats.begin(), scene_feats.end());
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!keep[i % kNumCategories]) x[i] = 0.0;
  const auto emb = query.embedding();
  x.insert(x.end(), emb.begin(), emb.end());
  return x;
}

PolicyForward forward(const PolicyParams& params, std::span<const double> input) {
  const PolicyShape& s = params.shape;
  require(static_cast<int>(input.size()) == s.input, "policy forward: input size mismatch");
  PolicyForward f;
  f.hidden.assign(static_cast<std::size_t>(s.hidden), 0.0);
  const auto w = params.in_weights();
  const auto b = params.in_bias();
  for (int j = 0; j < s.hidden; ++j) {
    const double* row = w.data() + static_cast<std::size_t>(j) * s.input;
    double acc = b[static_cast<std::size_t>(j)];
    for (int i = 0; i < s.input; ++i) acc += row[i] * input[static_cast<std::size_t>(i)];
    f.hidden[static_cast<std::size_t>(j)] = std::tanh(acc);
  }
  for (int h = 0; h < kNumHeads; ++h) {
    const int n = s.head_size(h);
    const auto hw = params.head_weights(h);
    const auto hb = params.head_bias(h);
    auto& logits = f.logits[static_cast<std::size_t>(h)];
    logits.assign(static_cast<std::size_t>(n), 0.0);
    for (int r = 0; r < n; ++r) {
      const double* row = hw.data() + static_cast<std::size_t>(r) * s.hidden;
      double acc = hb[static_cast<std::size_t>(r)];
      for (int j = 0; j < s.hidden; ++j) acc += row[j] * f.hidden[static_cast<std::size_t>(j)];
      logits[static_cast<std::size_t>(r)] = acc;
    }
  }
  return f;
}

double GenerationTrace::logprob() const {
  double sum = 0.0;
  for (double lp : token_logprobs) sum += lp;
  return sum;
}

double decode_coordinate(int token, int bins) { return (token + 0.5) / bins; }

int encode_coordinate(double v, int bins) {
  return std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1);
}

BBox decode_box(const GenerationTrace& t, int bins) {
  return {decode_coordinate(t.coords[0], bins), decode_coordinate(t.coords[1], bins),
          decode_coordinate(t.coords[2], bins), decode_coordinate(t.coords[3], bins)};
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  require(temperature > 0.0, "softmax: temperature must be positive");
  double mx = -INFINITY;
  for (double l : logits) mx = std::max(mx, l);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / temperature);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  double mx = -INFINITY;
  for (double l : logits) mx = std::max(mx, l);
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

double head_entropy_bits(std::span<const double> logits, double temperature) {
  const auto p = softmax(logits, temperature);
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return std::max(0.0, h);
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

namespace {

int draw_categorical(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  // u landed in the rounding slack above the final cumulative sum.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return static_cast<int>(i);
  return 0;
}

void fill_logprobs(const PolicyForward& fwd, GenerationTrace& t) {
  for (int h = 0; h < kNumHeads; ++h) {
    const auto lsm = log_softmax(fwd.logits[static_cast<std::size_t>(h)]);
    t.token_logprobs[static_cast<std::size_t>(h)] = lsm[static_cast<std::size_t>(t.token(h))];
  }
}

void set_token(GenerationTrace& t, int head, int token) {
  if (head == 0)
    t.intent = token;
  else
    t.coords[static_cast<std::size_t>(head - 1)] = token;
}

}  // namespace

Generation sample_generation(const PolicyParams& params, const PolicyForward& fwd,
                             double temperature, Stream& rng) {
  require(temperature > 0.0, "sample_generation: temperature must be positive");
  Generation g;
  g.trace.temperature = temperature;
  for (int h = 0; h < kNumHeads; ++h) {
    const auto p = softmax(fwd.logits[static_cast<std::size_t>(h)], temperature);
    set_token(g.trace, h, draw_categorical(p, rng.uniform()));
  }
  fill_logprobs(fwd, g.trace);
  g.box = decode_box(g.trace, params.shape.bins);
  return g;
}

Generation sample_generation(const PolicyParams& params, std::span<const double> input,
                             double temperature, Stream& rng) {
  return sample_generation(params, forward(params, input), temperature, rng);
}

Generation greedy_generation(const PolicyParams& params, const PolicyForward& fwd) {
  Generation g;
  g.trace.temperature = 0.0;
  for (int h = 0; h < kNumHeads; ++h) set_token(g.trace, h, argmax(fwd.logits[static_cast<std::size_t>(h)]));
  fill_logprobs(fwd, g.trace);
  g.box = decode_box(g.trace, params.shape.bins);
  return g;
}

Generation greedy_generation(const PolicyParams& params, std::span<const double> input) {
  return greedy_generation(params, forward(params, input));
}

namespace {

void check_tokens(const PolicyShape& s, const GenerationTrace& t) {
  require(t.intent >= 0 && t.intent < s.intent, "policy: intent token out of range");
  for (int c : t.coords) require(c >= 0 && c < s.bins, "policy: coordinate token out of range");
}

}  // namespace

double logprob(const PolicyForward& fwd, const GenerationTrace& t) {
  double sum = 0.0;
  for (int h = 0; h < kNumHeads; ++h) {
    const auto lsm = log_softmax(fwd.logits[static_cast<std::size_t>(h)]);
    sum += lsm[static_cast<std::size_t>(t.token(h))];
  }
  return sum;
}

double logprob(const PolicyParams& params, std::span<const double> input,
               const GenerationTrace& t) {
  check_tokens(params.shape, t);
  return logprob(forward(params, input), t);
}

double generation_entropy(const PolicyForward& fwd) {
  double h = 0.0;
  for (const auto& l : fwd.logits) h += head_entropy_bits(l);
  return h;
}

double generation_entropy(const PolicyParams& params, std::span<const double> input) {
  return generation_entropy(forward(params, input));
}

void accumulate_weighted_gradient(const PolicyParams& params, std::span<const double> input,
                                  const PolicyForward& fwd,
                                  std::span<const GenerationTrace> traces,
                                  std::span<const double> weights, PolicyParams& grad) {
  const PolicyShape& s = params.shape;
  require(traces.size() == weights.size(), "policy gradient: weights/traces size mismatch");
  require(grad.shape == s, "policy gradient: shape mismatch");
  for (const auto& t : traces) check_tokens(s, t);
  double wsum = 0.0;
  for (double w : weights) wsum += w;

  // d logprob / d logits = onehot(token) - softmax, summed with weights.
  std::vector<double> dhidden(static_cast<std::size_t>(s.hidden), 0.0);
  std::vector<double> dlogits;
  for (int h = 0; h < kNumHeads; ++h) {
    const int n = s.head_size(h);
    const auto p = softmax(fwd.logits[static_cast<std::size_t>(h)]);
    dlogits.assign(static_cast<std::size_t>(n), 0.0);
    for (int r = 0; r < n; ++r) dlogits[static_cast<std::size_t>(r)] = -wsum * p[static_cast<std::size_t>(r)];
    for (std::size_t g = 0; g < traces.size(); ++g)
      dlogits[static_cast<std::size_t>(traces[g].token(h))] += weights[g];

    const auto hw = params.head_weights(h);
    auto gw = grad.head_weights(h);
    auto gb = grad.head_bias(h);
    for (int r = 0; r < n; ++r) {
      const double d = dlogits[static_cast<std::size_t>(r)];
      if (d == 0.0) continue;
      gb[static_cast<std::size_t>(r)] += d;
      const std::size_t row = static_cast<std::size_t>(r) * s.hidden;
      for (int j = 0; j < s.hidden; ++j) {
        gw[row + static_cast<std::size_t>(j)] += d * fwd.hidden[static_cast<std::size_t>(j)];
        dhidden[static_cast<std::size_t>(j)] += d * hw[row + static_cast<std::size_t>(j)];
      }
    }
  }

  auto gw = grad.in_weights();
  auto gb = grad.in_bias();
  for (int j = 0; j < s.hidden; ++j) {
    const double hj = fwd.hidden[static_cast<std::size_t>(j)];
    const double dpre = dhidden[static_cast<std::size_t>(j)] * (1.0 - hj * hj);
    if (dpre == 0.0) continue;
    gb[static_cast<std::size_t>(j)] += dpre;
    double* row = gw.data() + static_cast<std::size_t>(j) * s.input;
    for (int i = 0; i < s.input; ++i) {
      const double xi = input[static_cast<std::size_t>(i)];
      if (xi != 0.0) row[i] += dpre * xi;
    }
  }
}

PolicyParams logprob_gradient(const PolicyParams& params, std::span<const double> input,
                              const GenerationTrace& trace) {
  PolicyParams grad(params.shape);
  const auto fwd = forward(params, input);
  const double one = 1.0;
  accumulate_weighted_gradient(params, input, fwd, std::span(&trace, 1), std::span(&one, 1), grad);
  return grad;
}

}  // namespace groundloop
