#include "groundloop/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "groundloop/error.hpp"

namespace groundloop {
namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
double median_of(const std::vector<AblationCell>& cells, F f) {
  std::vector<double> v;
  for (const auto& c : cells)
    if (c.ok) v.push_back(f(c.report));
  return median(std::move(v));
}

double implicit_acc(const EvalReport& r) {
  return r.by_kind[static_cast<std::size_t>(QueryKind::kImplicit)].acc_at_05;
}

}  // namespace

const char* ablation_axis_name(AblationAxis a) {
  return a == AblationAxis::kAreaPenalty ? "area-penalty" : "crop-strategy";
}

std::optional<AblationAxis> parse_ablation_axis(const std::string& s) {
  if (s == "area-penalty") return AblationAxis::kAreaPenalty;
  if (s == "crop-strategy") return AblationAxis::kCropStrategy;
  return std::nullopt;
}

double AblationTable::median_acc(int v) const {
  return median_of(cells[static_cast<std::size_t>(v)], [](const EvalReport& r) { return r.acc_at_05; });
}
double AblationTable::median_giou(int v) const {
  return median_of(cells[static_cast<std::size_t>(v)], [](const EvalReport& r) { return r.giou; });
}
double AblationTable::median_implicit_acc(int v) const {
  return median_of(cells[static_cast<std::size_t>(v)], implicit_acc);
}

int AblationTable::paired_seeds() const {
  int n = 0;
  for (std::size_t i = 0; i < cells[0].size(); ++i) n += cells[0][i].ok && cells[1][i].ok;
  return n;
}

int AblationTable::wins_acc() const {
  int w = 0;
  for (std::size_t i = 0; i < cells[0].size(); ++i)
    if (cells[0][i].ok && cells[1][i].ok && cells[1][i].report.acc_at_05 > cells[0][i].report.acc_at_05) ++w;
  return w;
}

int AblationTable::wins_implicit_acc() const {
  int w = 0;
  for (std::size_t i = 0; i < cells[0].size(); ++i)
    if (cells[0][i].ok && cells[1][i].ok && implicit_acc(cells[1][i].report) > implicit_acc(cells[0][i].report)) ++w;
  return w;
}

double sign_test_p(int wins, int n) {
  require(n >= 0 && wins >= 0 && wins <= n, "sign_test_p: need 0 <= wins <= n");
  if (wins == 0) return 1.0;
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    // C(n, k) / 2^n through lgamma keeps large n finite.
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  }
  return std::min(1.0, p);
}

AblationTable ablation_run(const RunConfig& base, AblationAxis axis, const std::vector<std::uint64_t>& seeds,
                           const AblationOptions& options) {
  if (seeds.empty()) throw Error(ErrorKind::kConfig, "ablation: at least one seed is required");
  RunConfig cfg = base;
  if (axis == AblationAxis::kCropStrategy) cfg.scene.query_mix = {0.0, 1.0, 1.0};
  validate(cfg);

  AblationTable t;
  t.axis = axis;
  t.reward_mode = options.reward_mode.value_or(
      axis == AblationAxis::kAreaPenalty ? RewardMode::kIntrinsicOracle : RewardMode::kIntrinsicSnapshot);
  if (axis == AblationAxis::kAreaPenalty)
    t.variants = {"verify-only", "verify+area"};
  else
    t.variants = {"strict-crop", "context-crop"};

  const auto train = generate_samples(cfg.train_scenes.start, cfg.train_scenes.count, cfg.scene, cfg.workers);
  const auto evals = generate_samples(cfg.eval_scenes.start, cfg.eval_scenes.count, cfg.scene, cfg.workers);
  const auto ptrain = prepare_samples(train, cfg.workers);
  const auto peval = prepare_samples(evals, cfg.workers);

  for (const std::uint64_t seed : seeds) {
    for (int v = 0; v < 2; ++v) {
      RunConfig c = cfg;
      c.seed = seed;
      c.grpo.reward_mode = t.reward_mode;
      if (axis == AblationAxis::kAreaPenalty) {
        c.grpo.area_penalty = v == 1;
      } else {
        c.grpo.crop_alpha = v == 1 ? base.grpo.crop_alpha : 0.0;
        c.verifier.crop_margin = c.grpo.crop_alpha;
      }
      AblationCell cell;
      cell.seed = seed;
      try {
        const GrpoConfig g = grpo_config(c);
        std::optional<FrozenVerifier> verifier;
        RewardSource source{g.reward_mode, nullptr};
        if (g.reward_mode == RewardMode::kIntrinsicSnapshot) {
          const auto vseed = Stream(seed).split(StreamPurpose::kVerifierInit, 0).key();
          verifier.emplace(pretrain_verifier(pretrain_config(c), vseed).params, 0);
          source.verifier = &*verifier;
        }
        PolicyParams params = init_params(c.policy, seed, c.init_scale);
        const PolicyParams ref = params;
        // Both variants share rollout streams so the comparison is paired.
        train_policy(params, ref, ptrain, g, source, Stream(seed).split(StreamPurpose::kAblation, 0), nullptr);
        cell.report = evaluate_policy(params, peval, eval_config(c)).report;
        cell.ok = true;
      } catch (const Error& e) {
        cell.error = e.what();
      }
      t.cells[static_cast<std::size_t>(v)].push_back(std::move(cell));
    }
  }
  return t;
}

std::string ablation_csv(const AblationTable& t) {
  std::string out = "variant,seed,ok,acc_at_05,giou,implicit_acc_at_05,relational_acc_at_05,direct_acc_at_05\n";
  char buf[512];
  for (int v = 0; v < 2; ++v) {
    for (const auto& c : t.cells[static_cast<std::size_t>(v)]) {
      const auto& r = c.report;
      std::snprintf(buf, sizeof buf, "%s,%llu,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    t.variants[static_cast<std::size_t>(v)].c_str(), static_cast<unsigned long long>(c.seed),
                    c.ok ? 1 : 0, r.acc_at_05, r.giou, implicit_acc(r), r.by_kind[1].acc_at_05,
                    r.by_kind[0].acc_at_05);
      out += buf;
    }
  }
  return out;
}

std::string ablation_summary(const AblationTable& t) {
  char buf[1024];
  const int n = t.paired_seeds();
  std::snprintf(buf, sizeof buf,
                "axis = %s\nreward_mode = %s\nseeds = %zu\npaired_seeds = %d\n"
                "%s.median_acc_at_05 = %.17g\n%s.median_acc_at_05 = %.17g\n"
                "%s.median_giou = %.17g\n%s.median_giou = %.17g\n"
                "%s.median_implicit_acc_at_05 = %.17g\n%s.median_implicit_acc_at_05 = %.17g\n"
                "wins_acc_at_05 = %d\nsign_test_p_acc = %.6g\n"
                "wins_implicit_acc_at_05 = %d\nsign_test_p_implicit = %.6g\n",
                ablation_axis_name(t.axis), reward_mode_name(t.reward_mode), t.cells[0].size(), n,
                t.variants[0].c_str(), t.median_acc(0), t.variants[1].c_str(), t.median_acc(1),
                t.variants[0].c_str(), t.median_giou(0), t.variants[1].c_str(), t.median_giou(1),
                t.variants[0].c_str(), t.median_implicit_acc(0), t.variants[1].c_str(), t.median_implicit_acc(1),
                t.wins_acc(), sign_test_p(t.wins_acc(), n), t.wins_implicit_acc(),
                sign_test_p(t.wins_implicit_acc(), n));
  std::string out = buf;
  for (int v = 0; v < 2; ++v)
    for (const auto& c : t.cells[static_cast<std::size_t>(v)])
      if (!c.ok) out += "failed." + t.variants[static_cast<std::size_t>(v)] + "." + std::to_string(c.seed) + " = " + c.error + "\n";
  return out;
}

}  // namespace groundloop
