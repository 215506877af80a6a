#pragma once

// Small drivers shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "groundloop/geometry.hpp"
#include "groundloop/grpo.hpp"
#include "groundloop/policy.hpp"
#include "groundloop/scene.hpp"

namespace harness {

struct SanityResult {
  int steps_run = 0;
  int first_hit_step = -1;  // first step after which greedy IoU >= 0.5
  double final_iou = 0.0;
  double best_iou = 0.0;
};

inline double greedy_iou(const groundloop::PolicyParams& p, const groundloop::PreparedSample& ps) {
  const auto g = groundloop::greedy_generation(p, ps.input);
  if (!groundloop::is_valid(g.box)) return 0.0;
  return groundloop::iou(g.box, ps.sample->gt.get());
}

// Extrinsic IoU reward on one fixed sample, the batch holding `batch_size`
// copies of it. Stops at the first greedy hit unless `run_all`.
inline SanityResult supervised_sanity(std::uint64_t seed, int max_steps = 500, int batch_size = 8,
                                      int workers = 1, bool run_all = false) {
  using namespace groundloop;
  const std::vector<SceneSample> samples = {make_sample(seed, SceneConfig{})};
  const auto prepared = prepare_samples(samples);
  GrpoConfig cfg;
  cfg.reward_mode = RewardMode::kExtrinsicIou;
  cfg.batch_size = batch_size;
  cfg.workers = workers;
  PolicyParams params = init_params(PolicyShape{}, seed, 0.01);
  const PolicyParams ref = params;
  const std::vector<const PreparedSample*> batch(static_cast<std::size_t>(batch_size), &prepared[0]);
  const Stream root = Stream(seed).split(StreamPurpose::kRound, 0);
  SanityResult out;
  for (int step = 0; step < max_steps; ++step) {
    grpo_step(params, ref, batch, cfg, RewardSource{RewardMode::kExtrinsicIou, nullptr}, root.split(StreamPurpose::kStep, static_cast<std::uint64_t>(step)));
    out.steps_run = step + 1;
    out.final_iou = greedy_iou(params, prepared[0]);
    out.best_iou = std::max(out.best_iou, out.final_iou);
    if (out.final_iou >= 0.5 && out.first_hit_step < 0) {
      out.first_hit_step = step + 1;
      if (!run_all) break;
    }
  }
  return out;
}

}  // namespace harness
