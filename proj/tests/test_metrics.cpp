#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "groundloop/error.hpp"
#include "groundloop/metrics.hpp"
#include "oracles.hpp"

using namespace groundloop;

TEST(Metrics, AccExamples) {
  const std::vector<BBox> gts = {{0, 0, 0.5, 0.5}, {0.2, 0.2, 0.4, 0.4}};
  EXPECT_EQ(acc_at_iou(gts, gts), 1.0);
  const std::vector<BBox> invalid = {{0.5, 0, 0.5, 0.5}, {0.3, 0.3, 0.1, 0.4}};
  EXPECT_EQ(acc_at_iou(invalid, gts), 0.0);
  // IoUs 0.6 and 0.4 on unit-height strips.
  const std::vector<BBox> g2 = {{0, 0, 0.5, 1}, {0, 0, 0.5, 1}};
  const std::vector<BBox> p2 = {{0, 0, 0.3, 1}, {0, 0, 0.2, 1}};
  EXPECT_NEAR(iou(p2[0], g2[0]), 0.6, 1e-12);
  EXPECT_NEAR(iou(p2[1], g2[1]), 0.4, 1e-12);
  EXPECT_EQ(acc_at_iou(p2, g2, 0.5), 0.5);
}

TEST(Metrics, GiouExamples) {
  const std::vector<BBox> one = {{0.1, 0.1, 0.4, 0.6}};
  EXPECT_EQ(giou_metric(one, one, GiouMode::kMeanIou), 1.0);
  EXPECT_EQ(giou_metric(one, one, GiouMode::kMeanGeneralizedIou), 1.0);
  const std::vector<BBox> g = {{0, 0, 0.5, 0.5}, {0, 0, 0.5, 0.5}};
  const std::vector<BBox> p = {{0, 0, 0.5, 0.5}, {0.6, 0.6, 0.9, 0.9}};
  EXPECT_NEAR(giou_metric(p, g, GiouMode::kMeanIou), 0.5, 1e-12);
  EXPECT_NEAR(giou_metric(std::vector<BBox>{{0.2, 0, 0.3, 0.1}}, std::vector<BBox>{{0, 0, 0.1, 0.1}},
                          GiouMode::kMeanGeneralizedIou),
              -1.0 / 3.0, 1e-12);
  EXPECT_NEAR(giou_metric(std::vector<BBox>{{0.3, 0, 0.3, 0.1}}, std::vector<BBox>{{0, 0, 0.1, 0.1}},
                          GiouMode::kMeanGeneralizedIou),
              -1.0, 1e-12);
}

TEST(Metrics, ModeNamesRoundTrip) {
  for (GiouMode m : {GiouMode::kMeanIou, GiouMode::kMeanGeneralizedIou})
    EXPECT_EQ(parse_giou_mode(giou_mode_name(m)), m);
  EXPECT_FALSE(parse_giou_mode("bogus").has_value());
}

// Cell-aligned boxes on a 16x16 grid: the metrics must match pixel counting.
TEST(Metrics, MatchPixelCountOracle) {
  Stream rng(31);
  auto rect = [&] {
    int x0 = static_cast<int>(rng.uniform_int(0, 15)), x1 = static_cast<int>(rng.uniform_int(0, 15));
    int y0 = static_cast<int>(rng.uniform_int(0, 15)), y1 = static_cast<int>(rng.uniform_int(0, 15));
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    return CellRect{x0, y0, x1, y1};
  };
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<BBox> preds, gts;
    double hits = 0, sum = 0;
    for (int i = 0; i < 40; ++i) {
      const CellRect a = rect(), b = rect();
      preds.push_back(cell_rect_to_box(a, 16, 16));
      gts.push_back(cell_rect_to_box(b, 16, 16));
      const double v = oracle::pixel_iou(a, b, 16);
      hits += v >= 0.5;
      sum += v;
    }
    EXPECT_NEAR(acc_at_iou(preds, gts), hits / 40, 1e-12);
    EXPECT_NEAR(giou_metric(preds, gts, GiouMode::kMeanIou), sum / 40, 1e-12);
  }
}

TEST(Metrics, MismatchedLengthsAreContractErrors) {
  const std::vector<BBox> a(2, BBox{0, 0, 1, 1}), b(3, BBox{0, 0, 1, 1});
  EXPECT_THROW(acc_at_iou(a, b), Error);
}

namespace {
struct EvalFixture {
  std::vector<SceneSample> samples;
  std::vector<PreparedSample> prepared;
  EvalFixture() {
    SceneConfig cfg;
    cfg.query_mix = {1, 1, 1};
    samples = generate_samples(3000, 60, cfg);
    prepared = prepare_samples(samples);
  }
};
}  // namespace

TEST(Evaluate, ReportAgreesWithPredictions) {
  const EvalFixture f;
  const PolicyParams p = init_params(PolicyShape{}, 8, 0.5);
  const Evaluation ev = evaluate_policy(p, f.prepared, EvalConfig{});
  ASSERT_EQ(ev.predictions.size(), f.samples.size());
  std::vector<BBox> gts;
  for (const auto& s : f.samples) gts.push_back(s.gt.get());
  EXPECT_EQ(ev.report.n, 60);
  EXPECT_EQ(ev.report.acc_at_05, acc_at_iou(ev.predictions, gts));
  EXPECT_EQ(ev.report.mean_iou, giou_metric(ev.predictions, gts, GiouMode::kMeanIou));
  EXPECT_EQ(ev.report.mean_generalized_iou, giou_metric(ev.predictions, gts, GiouMode::kMeanGeneralizedIou));
  int total = 0;
  for (const auto& k : ev.report.by_kind) total += k.n;
  EXPECT_EQ(total, 60);
  for (std::size_t i = 0; i < ev.predictions.size(); ++i)
    EXPECT_EQ(ev.predictions[i], greedy_generation(p, f.prepared[i].input).box);
  EXPECT_FALSE(ev.report.has_verifier);
}

TEST(Evaluate, DeterministicAcrossWorkersAndRepeats) {
  const EvalFixture f;
  const PolicyParams p = init_params(PolicyShape{}, 8, 0.5);
  VerifierParams v;
  v.bias() = 0.7;
  EvalConfig c;
  c.sampled_decode = true;
  c.seed = 12;
  const auto a = evaluate_policy(p, f.prepared, c, &v);
  c.workers = 4;
  const auto b = evaluate_policy(p, f.prepared, c, &v);
  EXPECT_EQ(a.report, b.report);
  EXPECT_EQ(a.predictions, b.predictions);
  c.seed = 13;
  EXPECT_NE(evaluate_policy(p, f.prepared, c, &v).predictions, a.predictions);
}

TEST(Entropy, NearUniformPolicyAndSaturatedPolicy) {
  const EvalFixture f;
  VerifierParams v;
  v.at(0, 0) = 3.0;
  const EntropyReport r0 = entropy_report(init_params(PolicyShape{}, 1, 0.01), v, f.prepared, EvalConfig{});
  EXPECT_GE(r0.mean_gen_entropy_bits, 20.0);
  EXPECT_LE(r0.max_ver_entropy_bits, 1.0);
  EXPECT_TRUE(r0.ver_bound_holds);
  EXPECT_NEAR(r0.ratio, r0.mean_gen_entropy_bits / r0.max_ver_entropy_bits, 1e-12);

  PolicyParams sat(PolicyShape{});
  for (int h = 0; h < kNumHeads; ++h) {
    auto b = sat.head_bias(h);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = i == (h == 0 ? 1u : (h <= 2 ? 4u : 20u)) ? 40.0 : -40.0;
  }
  const EntropyReport r1 = entropy_report(sat, v, f.prepared, EvalConfig{});
  EXPECT_LE(r1.mean_gen_entropy_bits, 0.1);
  EXPECT_TRUE(r1.ver_bound_holds);
}

TEST(Report, CsvHasAggregateAndKindRows) {
  EvalReport r;
  r.n = 3;
  const std::string csv = eval_report_csv(r, GiouMode::kMeanIou);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("\nall,3,"), std::string::npos);
  EXPECT_NE(csv.find("\nimplicit,"), std::string::npos);
}
