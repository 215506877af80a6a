#include "groundloop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "groundloop/error.hpp"

namespace groundloop {

const char* giou_mode_name(GiouMode m) {
  return m == GiouMode::kMeanIou ? "mean-iou" : "mean-generalized-iou";
}

std::optional<GiouMode> parse_giou_mode(const std::string& s) {
  if (s == "mean-iou") return GiouMode::kMeanIou;
  if (s == "mean-generalized-iou") return GiouMode::kMeanGeneralizedIou;
  return std::nullopt;
}

double acc_at_iou(std::span<const BBox> pred, std::span<const BBox> gts, double threshold) {
  require(pred.size() == gts.size(), "acc_at_iou: length mismatch");
  if (pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (is_valid(pred[i]) && iou(pred[i], gts[i]) >= threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double giou_metric(std::span<const BBox> pred, std::span<const BBox> gts, GiouMode mode) {
  require(pred.size() == gts.size(), "giou_metric: length mismatch");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!is_valid(pred[i]))
      sum += mode == GiouMode::kMeanIou ? 0.0 : -1.0;
    else
      sum += mode == GiouMode::kMeanIou ? iou(pred[i], gts[i]) : generalized_iou(pred[i], gts[i]);
  }
  return sum / static_cast<double>(pred.size());
}

Evaluation evaluate_policy(const PolicyParams& params, std::span<const PreparedSample> samples,
                           const EvalConfig& cfg, const VerifierParams* verifier) {
  const std::size_t n = samples.size();
  Evaluation ev;
  ev.predictions.resize(n);
  std::vector<double> h_gen(n, 0.0), h_ver(n, 0.0);
  const Stream root = Stream(cfg.seed).split(StreamPurpose::kEval, 0);
#pragma omp parallel for schedule(static) num_threads(std::max(1, cfg.workers))
  for (std::size_t i = 0; i < n; ++i) {
    const auto fwd = forward(params, samples[i].input);
    h_gen[i] = generation_entropy(fwd);
    Generation g;
    if (cfg.sampled_decode) {
      Stream rng = root.split(StreamPurpose::kSample, i);
      g = sample_generation(params, fwd, cfg.temperature, rng);
    } else {
      g = greedy_generation(params, fwd);
    }
    ev.predictions[i] = g.box;
    if (verifier && is_valid(g.box)) {
      const auto feats = crop_features(samples[i].sample->scene, pad_and_clamp(g.box, cfg.crop_alpha));
      h_ver[i] = verifier_entropy(learned_verify(*verifier, feats, samples[i].query).s);
    }
  }

  std::vector<BBox> gts(n);
  for (std::size_t i = 0; i < n; ++i) gts[i] = samples[i].sample->gt.get();

  EvalReport& r = ev.report;
  r.n = static_cast<int>(n);
  r.acc_at_05 = acc_at_iou(ev.predictions, gts, cfg.iou_threshold);
  r.mean_iou = giou_metric(ev.predictions, gts, GiouMode::kMeanIou);
  r.mean_generalized_iou = giou_metric(ev.predictions, gts, GiouMode::kMeanGeneralizedIou);
  r.giou = cfg.giou_mode == GiouMode::kMeanIou ? r.mean_iou : r.mean_generalized_iou;
  for (int k = 0; k < 3; ++k) {
    std::vector<BBox> p, g;
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<int>(samples[i].sample->query.kind) != k) continue;
      p.push_back(ev.predictions[i]);
      g.push_back(gts[i]);
    }
    auto& b = r.by_kind[static_cast<std::size_t>(k)];
    b.n = static_cast<int>(p.size());
    b.acc_at_05 = acc_at_iou(p, g, cfg.iou_threshold);
    b.mean_iou = giou_metric(p, g, GiouMode::kMeanIou);
    b.mean_generalized_iou = giou_metric(p, g, GiouMode::kMeanGeneralizedIou);
  }
  double hsum = 0.0;
  for (double h : h_gen) hsum += h;
  r.mean_gen_entropy_bits = n ? hsum / static_cast<double>(n) : 0.0;
  r.has_verifier = verifier != nullptr;
  r.max_ver_entropy_bits = 0.0;
  for (double h : h_ver) r.max_ver_entropy_bits = std::max(r.max_ver_entropy_bits, h);
  if (r.max_ver_entropy_bits > 1.0)
    throw Error(ErrorKind::kNumeric, "evaluate: verifier entropy exceeds 1 bit");
  return ev;
}

EntropyReport entropy_report(const PolicyParams& policy, const VerifierParams& verifier,
                             std::span<const PreparedSample> samples, const EvalConfig& cfg) {
  require(!samples.empty(), "entropy_report: empty sample set");
  const auto ev = evaluate_policy(policy, samples, cfg, &verifier);
  EntropyReport out;
  out.mean_gen_entropy_bits = ev.report.mean_gen_entropy_bits;
  out.max_ver_entropy_bits = ev.report.max_ver_entropy_bits;
  out.ver_bound_holds = out.max_ver_entropy_bits <= 1.0;
  out.ratio = out.max_ver_entropy_bits > 0.0 ? out.mean_gen_entropy_bits / out.max_ver_entropy_bits
                                             : std::numeric_limits<double>::infinity();
  return out;
}

std::string eval_report_csv(const EvalReport& r, GiouMode mode) {
  std::string out = "scope,n,acc_at_05,giou,mean_iou,mean_generalized_iou\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "all,%d,%.17g,%.17g,%.17g,%.17g\n", r.n, r.acc_at_05, r.giou,
                r.mean_iou, r.mean_generalized_iou);
  out += buf;
  for (int k = 0; k < 3; ++k) {
    const auto& b = r.by_kind[static_cast<std::size_t>(k)];
    const double g = mode == GiouMode::kMeanIou ? b.mean_iou : b.mean_generalized_iou;
    std::snprintf(buf, sizeof buf, "%s,%d,%.17g,%.17g,%.17g,%.17g\n",
                  query_kind_name(static_cast<QueryKind>(k)), b.n, b.acc_at_05, g, b.mean_iou,
                  b.mean_generalized_iou);
    out += buf;
  }
  return out;
}

std::string eval_report_summary(const EvalReport& r, GiouMode mode) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "n = %d\nacc_at_05 = %.17g\ngiou = %.17g\ngiou_mode = %s\nmean_iou = %.17g\n"
                "mean_generalized_iou = %.17g\nmean_gen_entropy_bits = %.17g\n",
                r.n, r.acc_at_05, r.giou, giou_mode_name(mode), r.mean_iou,
                r.mean_generalized_iou, r.mean_gen_entropy_bits);
  std::string out = buf;
  if (r.has_verifier) {
    std::snprintf(buf, sizeof buf, "max_ver_entropy_bits = %.17g\nver_entropy_bound_holds = %s\n",
                  r.max_ver_entropy_bits, r.max_ver_entropy_bits <= 1.0 ? "true" : "false");
    out += buf;
  }
  return out;
}

}  // namespace groundloop
