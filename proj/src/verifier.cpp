#include "groundloop/verifier.hpp"

#include <algorithm>
#include <cmath>

#include "groundloop/error.hpp"

namespace groundloop {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

void check_dims(std::span<const double> f, std::span<const double> q) {
  require(f.size() == kCropFeatureSize, "verifier: crop feature size mismatch");
  require(q.size() == Query::kEmbeddingSize, "verifier: query embedding size mismatch");
}

inline double feat(std::span<const double> f, int a) {
  return a < kCropFeatureSize ? f[static_cast<std::size_t>(a)] : 1.0;
}

inline double qry(std::span<const double> q, int b) {
  return b < Query::kEmbeddingSize ? q[static_cast<std::size_t>(b)] : 1.0;
}

}  // namespace

double verifier_logit(const VerifierParams& p, std::span<const double> f,
                      std::span<const double> q) {
  check_dims(f, q);
  require(p.weights.size() == VerifierParams::kSize, "verifier: parameter size mismatch");
  double z = 0.0;
  for (int a = 0; a < VerifierParams::kRows; ++a) {
    const double fa = feat(f, a);
    if (fa == 0.0) continue;
    double row = 0.0;
    for (int b = 0; b < VerifierParams::kCols; ++b) row += p.at(a, b) * qry(q, b);
    z += fa * row;
  }
  return z;
}

VerifierScore learned_verify(const VerifierParams& p, std::span<const double> f,
                             std::span<const double> q) {
  VerifierScore out;
  out.s = std::clamp(logistic(verifier_logit(p, f, q)), 0.0, 1.0);
  out.source = ScoreSource::kLearned;
  return out;
}

std::vector<double> verifier_score_gradient(const VerifierParams& p, std::span<const double> f,
                                            std::span<const double> q) {
  const double s = logistic(verifier_logit(p, f, q));
  const double ds = s * (1.0 - s);
  std::vector<double> g(VerifierParams::kSize, 0.0);
  for (int a = 0; a < VerifierParams::kRows; ++a)
    for (int b = 0; b < VerifierParams::kCols; ++b)
      g[static_cast<std::size_t>(a * VerifierParams::kCols + b)] = ds * feat(f, a) * qry(q, b);
  return g;
}

VerifierScore oracle_verify(const SceneSample& sample, const CropRegion& crop,
                            double reliability, Stream& rng) {
  require(is_valid(crop.box), "oracle_verify: invalid crop");
  require(reliability >= 0.0 && reliability <= 1.0, "oracle_verify: reliability outside [0,1]");
  const BBox& gt = sample.gt.oracle_get();
  VerifierScore out;
  out.source = ScoreSource::kOracle;
  out.reliability = reliability;
  if (reliability < 1.0 && !rng.bernoulli(reliability)) {
    out.s = rng.uniform();
    return out;
  }
  out.s = std::clamp(intersection_area(gt, crop.box) / gt.area(), 0.0, 1.0);
  return out;
}

double verifier_entropy(double s) {
  require(s >= 0.0 && s <= 1.0, "verifier_entropy: score outside [0,1]");
  double h = 0.0;
  if (s > 0.0) h -= s * std::log2(s);
  if (s < 1.0) h -= (1.0 - s) * std::log2(1.0 - s);
  return std::clamp(h, 0.0, 1.0);
}

VerifierScore FrozenVerifier::score(std::span<const double> f, std::span<const double> q) const {
  VerifierScore out = learned_verify(params_, f, q);
  out.source = ScoreSource::kSnapshot;
  out.round = round_;
  return out;
}

// ---------------------------------------------------------------------------
// Pre-training

namespace {

BBox jitter_box(const BBox& b, double frac, Stream& rng) {
  const double w = b.width(), h = b.height();
  auto j = [&](double side) { return (2.0 * rng.uniform() - 1.0) * frac * side; };
  BBox out{b.x1 + j(w), b.y1 + j(h), b.x2 + j(w), b.y2 + j(h)};
  out.x1 = std::clamp(out.x1, 0.0, 1.0);
  out.y1 = std::clamp(out.y1, 0.0, 1.0);
  out.x2 = std::clamp(out.x2, 0.0, 1.0);
  out.y2 = std::clamp(out.y2, 0.0, 1.0);
  return is_valid(out) ? out : b;
}

std::optional<BBox> random_far_box(const BBox& gt, double max_iou, Stream& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), d = rng.uniform();
    BBox box{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
    if (!is_valid(box)) continue;
    if (iou(box, gt) < max_iou) return box;
  }
  return std::nullopt;
}

LabeledPair make_pair(const Scene& scene, const Query& q, const BBox& box, double margin,
                      int label) {
  LabeledPair p;
  p.features = crop_features(scene, pad_and_clamp(box, margin));
  p.query = q.embedding();
  p.label = label;
  return p;
}

}  // namespace

std::vector<LabeledPair> make_verifier_pairs(const PretrainConfig& cfg, Stream stream,
                                             int scene_count) {
  require(scene_count >= 0, "make_verifier_pairs: negative scene count");
  std::vector<std::vector<LabeledPair>> per_scene(static_cast<std::size_t>(scene_count));
  std::vector<std::string> errors(per_scene.size());
  const double mix_total = cfg.mix.positive + cfg.mix.other_object + cfg.mix.random_box;
  require(mix_total > 0.0, "pretrain: pair mix has no positive weight");

#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, cfg.workers))
  for (int i = 0; i < scene_count; ++i) {
    try {
      PretrainScope scope;
      const std::uint64_t sample_seed = stream.split(StreamPurpose::kVerifierPairs, static_cast<std::uint64_t>(i)).key();
      const SceneSample smp = make_sample(sample_seed, cfg.scenes);
      const BBox& gt = smp.gt.get();
      const int gt_id = smp.gt_object_id.get();
      Stream rng = Stream(sample_seed).split(StreamPurpose::kSample, 1);
      auto& out = per_scene[static_cast<std::size_t>(i)];
      for (int k = 0; k < cfg.pairs_per_scene; ++k) {
        const double u = rng.uniform() * mix_total;
        if (u < cfg.mix.positive) {
          out.push_back(make_pair(smp.scene, smp.query, jitter_box(gt, cfg.jitter, rng),
                                  cfg.crop_margin, 1));
          continue;
        }
        const auto& objs = smp.scene.objects;
        if (u < cfg.mix.positive + cfg.mix.other_object && objs.size() > 1) {
          auto pick = rng.uniform_int(0, static_cast<std::int64_t>(objs.size()) - 2);
          if (pick >= gt_id) ++pick;
          const BBox& other = objs[static_cast<std::size_t>(pick)].box;
          out.push_back(make_pair(smp.scene, smp.query, jitter_box(other, cfg.jitter, rng),
                                  cfg.crop_margin, 0));
          continue;
        }
        if (auto far = random_far_box(gt, cfg.random_max_iou, rng))
          out.push_back(make_pair(smp.scene, smp.query, *far, cfg.crop_margin, 0));
      }
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(ErrorKind::kGeneration, "pretrain: " + e);
  std::vector<LabeledPair> pairs;
  for (auto& v : per_scene) pairs.insert(pairs.end(), v.begin(), v.end());
  return pairs;
}

double pair_loss(const VerifierParams& p, std::span<const LabeledPair> pairs) {
  double loss = 0.0;
  for (const auto& pr : pairs) {
    const double z = verifier_logit(p, pr.features, pr.query);
    // log(1 + exp(-y z)) with y in {-1, +1}, evaluated stably.
    const double m = pr.label ? -z : z;
    loss += m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
  }
  return pairs.empty() ? 0.0 : loss / static_cast<double>(pairs.size());
}

double pair_accuracy(const VerifierParams& p, std::span<const LabeledPair> pairs) {
  std::size_t hits = 0;
  for (const auto& pr : pairs) {
    const double s = logistic(verifier_logit(p, pr.features, pr.query));
    hits += (s >= 0.5) == (pr.label == 1);
  }
  return pairs.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pairs.size());
}

PretrainResult pretrain_verifier(const PretrainConfig& cfg, std::uint64_t seed) {
  if (cfg.steps < 1) throw Error(ErrorKind::kConfig, "pretrain: steps must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorKind::kConfig, "pretrain: learning rate must be positive");
  const Stream root(seed);
  const auto train = make_verifier_pairs(cfg, root.split(StreamPurpose::kVerifierPairs, 0), cfg.train_scenes);
  const auto heldout = make_verifier_pairs(cfg, root.split(StreamPurpose::kVerifierPairs, 1), cfg.heldout_scenes);
  if (train.empty()) throw Error(ErrorKind::kConfig, "pretrain: no training pairs");

  // Bilinear features are fixed per pair; precompute them once.
  constexpr int K = VerifierParams::kSize;
  const std::size_t n = train.size();
  std::vector<double> phi(n * K);
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < VerifierParams::kRows; ++a)
      for (int b = 0; b < VerifierParams::kCols; ++b)
        phi[i * K + static_cast<std::size_t>(a * VerifierParams::kCols + b)] =
            feat(train[i].features, a) * qry(train[i].query, b);

  PretrainResult res;
  VerifierParams& p = res.params;
  std::vector<double> grad(K);
  std::vector<double> z(n);
  res.loss_history.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    double loss = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = phi.data() + i * K;
      double zi = 0.0;
      for (int k = 0; k < K; ++k) zi += row[k] * p.weights[static_cast<std::size_t>(k)];
      const double m = train[i].label ? -zi : zi;
      loss += m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
      const double r = logistic(zi) - train[i].label;
      for (int k = 0; k < K; ++k) grad[static_cast<std::size_t>(k)] += r * row[k];
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss))
      throw Error(ErrorKind::kNumeric, "pretrain: non-finite loss at step " + std::to_string(step));
    res.loss_history.push_back(loss);
    for (int k = 0; k < K; ++k)
      p.weights[static_cast<std::size_t>(k)] -= cfg.learning_rate * grad[static_cast<std::size_t>(k)] / static_cast<double>(n);
  }
  res.train_accuracy = pair_accuracy(p, train);
  res.heldout_accuracy = pair_accuracy(p, heldout);
  return res;
}

}  // namespace groundloop
