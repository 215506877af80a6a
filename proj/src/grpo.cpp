#include "groundloop/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "groundloop/error.hpp"

namespace groundloop {

const char* reward_mode_name(RewardMode m) {
  switch (m) {
    case RewardMode::kIntrinsicOracle: return "intrinsic-oracle";
    case RewardMode::kIntrinsicSnapshot: return "intrinsic-snapshot";
    case RewardMode::kExtrinsicIou: return "extrinsic-iou";
  }
  return "?";
}

std::optional<RewardMode> parse_reward_mode(const std::string& s) {
  for (auto m : {RewardMode::kIntrinsicOracle, RewardMode::kIntrinsicSnapshot, RewardMode::kExtrinsicIou})
    if (s == reward_mode_name(m)) return m;
  return std::nullopt;
}

void validate(const GrpoConfig& c) {
  auto fail = [](const char* what) { throw Error(ErrorKind::kConfig, std::string("grpo: ") + what); };
  if (c.group_size < 2) fail("group_size must be >= 2");
  if (!(c.temperature > 0.0)) fail("temperature must be > 0");
  if (c.epochs < 0) fail("epochs must be >= 0");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
  if (!(c.learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (!(c.clip_eps >= 0.0)) fail("clip_eps must be >= 0");
  if (!(c.kl_coef >= 0.0)) fail("kl_coef must be >= 0");
  if (!(c.area_lambda >= 0.0)) fail("area_lambda must be >= 0");
  if (!(c.area_tau > 0.0 && c.area_tau <= 1.0)) fail("area_tau must lie in (0, 1]");
  if (!(c.crop_alpha >= 0.0)) fail("crop_alpha must be >= 0");
  if (!(c.oracle_reliability >= 0.0 && c.oracle_reliability <= 1.0)) fail("oracle_reliability must lie in [0, 1]");
  if (!(c.adv_std_floor > 0.0)) fail("adv_std_floor must be > 0");
  if (!std::isfinite(c.invalid_reward)) fail("invalid_reward must be finite");
}

RewardBreakdown compose_reward(double s, const BBox& box, double lambda, double tau,
                               double r_invalid, bool penalty_enabled) {
  RewardBreakdown out;
  if (!is_valid(box)) {
    out.invalid = true;
    out.r = r_invalid;
    return out;
  }
  out.s = s;
  out.area_penalty = penalty_enabled ? lambda * std::max(0.0, area_ratio(box) - tau) : 0.0;
  out.r = s - out.area_penalty;
  return out;
}

double extrinsic_reward(const BBox& box, const BBox& gt, double r_invalid) {
  require(is_valid(gt), "extrinsic_reward: invalid ground truth");
  return is_valid(box) ? iou(box, gt) : r_invalid;
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_floor) {
  require(rewards.size() >= 2, "group_advantages: need at least two rewards");
  for (double r : rewards) require(std::isfinite(r), "group_advantages: non-finite reward");
  std::vector<double> adv(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; }))
    return adv;
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::max(std::sqrt(var / n), std_floor);
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

double clipped_objective_term(double ratio, double advantage, double eps) {
  require(ratio > 0.0, "clipped_objective_term: ratio must be positive");
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_term(double logprob_ref, double logprob_current) {
  const double d = logprob_ref - logprob_current;
  return std::max(0.0, std::expm1(d) - d);
}

std::vector<PreparedSample> prepare_samples(std::span<const SceneSample> samples, int workers) {
  std::vector<PreparedSample> out(samples.size());
#pragma omp parallel for schedule(static) num_threads(std::max(1, workers))
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i].sample = &samples[i];
    out[i].query = samples[i].query.embedding();
    out[i].input = policy_input(scene_features(samples[i].scene), samples[i].query);
  }
  return out;
}

double kl_estimate(const PolicyParams& params, const PolicyParams& ref,
                   std::span<const TraceInput> batch) {
  require(!batch.empty(), "kl_estimate: empty batch");
  double sum = 0.0;
  for (const auto& ti : batch)
    sum += kl_term(logprob(ref, *ti.input, ti.trace), logprob(params, *ti.input, ti.trace));
  return sum / static_cast<double>(batch.size());
}

void check_reward_source(const GrpoConfig& config, const RewardSource& source) {
  if (config.reward_mode != source.mode)
    throw Error(ErrorKind::kConfig, "grpo: reward source does not match configured reward mode");
  if (source.mode == RewardMode::kIntrinsicSnapshot && source.verifier == nullptr)
    throw Error(ErrorKind::kConfig, "grpo: intrinsic-snapshot mode requires a round verifier");
  if (source.mode != RewardMode::kIntrinsicSnapshot && source.verifier != nullptr)
    throw Error(ErrorKind::kConfig, "grpo: a round verifier is only valid in intrinsic-snapshot mode");
}

RewardBreakdown score_box(const PreparedSample& ps, const BBox& box, const GrpoConfig& c,
                          const RewardSource& source, Stream& rng) {
  if (!is_valid(box)) return compose_reward(0.0, box, c.area_lambda, c.area_tau, c.invalid_reward);
  switch (source.mode) {
    case RewardMode::kExtrinsicIou: {
      RewardBreakdown out;
      out.s = extrinsic_reward(box, ps.sample->gt.get(), c.invalid_reward);
      out.r = out.s;
      return out;
    }
    case RewardMode::kIntrinsicOracle: {
      const CropRegion crop = pad_and_clamp(box, c.crop_alpha);
      const double s = oracle_verify(*ps.sample, crop, c.oracle_reliability, rng).s;
      return compose_reward(s, box, c.area_lambda, c.area_tau, c.invalid_reward, c.area_penalty);
    }
    case RewardMode::kIntrinsicSnapshot: {
      const CropRegion crop = pad_and_clamp(box, c.crop_alpha);
      const auto feats = crop_features(ps.sample->scene, crop);
      const double s = source.verifier->score(feats, ps.query).s;
      return compose_reward(s, box, c.area_lambda, c.area_tau, c.invalid_reward, c.area_penalty);
    }
  }
  return {};
}

RolloutResult rollout_sample(const PolicyParams& params, const PolicyParams& ref,
                             const PreparedSample& ps, const GrpoConfig& c,
                             const RewardSource& source, Stream rng, int batch_generations) {
  const int G = c.group_size;
  RolloutResult res;
  GroupSample& grp = res.group;
  const PolicyForward fwd = forward(params, ps.input);
  const PolicyForward ref_fwd = forward(ref, ps.input);
  grp.entropy_bits = generation_entropy(fwd);

  Stream sample_rng = rng.split(StreamPurpose::kRollout, 0);
  Stream reward_rng = rng.split(StreamPurpose::kOracle, 0);
  std::vector<double> rewards(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    Generation gen = sample_generation(params, fwd, c.temperature, sample_rng);
    const RewardBreakdown rb = score_box(ps, gen.box, c, source, reward_rng);
    rewards[static_cast<std::size_t>(g)] = rb.r;
    grp.ref_logprobs.push_back(logprob(ref_fwd, gen.trace));
    grp.traces.push_back(gen.trace);
    grp.boxes.push_back(gen.box);
    grp.rewards.push_back(rb);
  }
  grp.advantages = group_advantages(rewards, c.adv_std_floor);

  // Sampling and update parameters coincide (single update per batch), so the
  // current log-probability equals the recorded sampling log-probability.
  const double inv_n = 1.0 / static_cast<double>(batch_generations);
  std::vector<double> weights(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    const auto gi = static_cast<std::size_t>(g);
    const double lp_cur = logprob(fwd, grp.traces[gi]);
    const double lp_old = grp.traces[gi].logprob();
    const double ratio = std::exp(lp_cur - lp_old);
    const double adv = grp.advantages[gi];
    const double term = clipped_objective_term(ratio, adv, c.clip_eps);
    const double kl = kl_term(grp.ref_logprobs[gi], lp_cur);
    res.kl_sum += kl;
    res.loss += (-term + c.kl_coef * kl) * inv_n;
    // d term / d lp: ratio * A while the unclipped branch is active.
    const bool unclipped = ratio * adv <= std::clamp(ratio, 1.0 - c.clip_eps, 1.0 + c.clip_eps) * adv;
    const double dterm = unclipped ? ratio * adv : 0.0;
    const double dkl = -std::expm1(grp.ref_logprobs[gi] - lp_cur);
    weights[gi] = (-dterm + c.kl_coef * dkl) * inv_n;
  }
  res.grad = PolicyParams(params.shape);
  accumulate_weighted_gradient(params, ps.input, fwd, grp.traces, weights, res.grad);
  return res;
}

namespace {

int batch_generations(std::span<const PreparedSample* const> batch, const GrpoConfig& c) {
  return static_cast<int>(batch.size()) * c.group_size;
}

}  // namespace

std::vector<RolloutResult> rollout_batch_serial(const PolicyParams& params, const PolicyParams& ref,
                                                std::span<const PreparedSample* const> batch,
                                                const GrpoConfig& c, const RewardSource& source,
                                                const Stream& step_stream) {
  std::vector<RolloutResult> out(batch.size());
  const int n = batch_generations(batch, c);
  for (std::size_t i = 0; i < batch.size(); ++i)
    out[i] = rollout_sample(params, ref, *batch[i], c, source,
                            step_stream.split(StreamPurpose::kSample, i), n);
  return out;
}

std::vector<RolloutResult> rollout_batch_parallel(const PolicyParams& params, const PolicyParams& ref,
                                                  std::span<const PreparedSample* const> batch,
                                                  const GrpoConfig& c, const RewardSource& source,
                                                  const Stream& step_stream, int workers) {
  std::vector<RolloutResult> out(batch.size());
  std::vector<std::string> errors(batch.size());
  const int n = batch_generations(batch, c);
  const auto count = static_cast<std::int64_t>(batch.size());
#pragma omp parallel for schedule(static) num_threads(std::max(1, workers))
  for (std::int64_t i = 0; i < count; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      out[k] = rollout_sample(params, ref, *batch[k], c, source,
                              step_stream.split(StreamPurpose::kSample, k), n);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(ErrorKind::kNumeric, "rollout: " + e);
  return out;
}

StepStats grpo_step(PolicyParams& params, const PolicyParams& ref,
                    std::span<const PreparedSample* const> batch, const GrpoConfig& c,
                    const RewardSource& source, const Stream& step_stream) {
  require(!batch.empty(), "grpo_step: empty batch");
  check_reward_source(c, source);
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = c.workers > 1
                           ? rollout_batch_parallel(params, ref, batch, c, source, step_stream, c.workers)
                           : rollout_batch_serial(params, ref, batch, c, source, step_stream);

  // Ordered reduction keeps the update independent of worker count.
  StepStats st;
  PolicyParams grad(params.shape);
  double n_valid = 0.0, n_total = 0.0, kl_sum = 0.0, s_sum = 0.0, r_sum = 0.0, h_sum = 0.0;
  for (const auto& r : results) {
    st.loss += r.loss;
    kl_sum += r.kl_sum;
    h_sum += r.group.entropy_bits;
    for (const auto& rb : r.group.rewards) {
      n_total += 1.0;
      r_sum += rb.r;
      if (!rb.invalid) {
        n_valid += 1.0;
        s_sum += rb.s;
      }
    }
    for (std::size_t k = 0; k < grad.data.size(); ++k) grad.data[k] += r.grad.data[k];
  }
  if (!std::isfinite(st.loss)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "grpo: non-finite loss (mean reward %.6g, kl sum %.6g)",
                  r_sum / n_total, kl_sum);
    throw Error(ErrorKind::kNumeric, buf);
  }
  for (std::size_t k = 0; k < grad.data.size(); ++k) {
    if (!std::isfinite(grad.data[k])) throw Error(ErrorKind::kNumeric, "grpo: non-finite gradient");
    params.data[k] -= c.learning_rate * grad.data[k];
  }
  st.mean_reward = r_sum / n_total;
  st.mean_s = n_valid > 0.0 ? s_sum / n_valid : 0.0;
  st.invalid_frac = 1.0 - n_valid / n_total;
  st.kl = kl_sum / n_total;
  st.gen_entropy_bits = h_sum / static_cast<double>(results.size());
  if (c.record_wallclock)
    st.wallclock_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return st;
}

std::int64_t train_policy(PolicyParams& params, const PolicyParams& ref,
                          std::span<const PreparedSample> train, const GrpoConfig& c,
                          const RewardSource& source, const Stream& stream,
                          const StepCallback& on_step, std::int64_t first_step) {
  validate(c);
  check_reward_source(c, source);
  require(!train.empty(), "train_policy: empty training set");
  TrainingScope scope;
  std::int64_t step = first_step;
  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Stream shuffle = stream.split(StreamPurpose::kEpoch, static_cast<std::uint64_t>(epoch))
                         .split(StreamPurpose::kShuffle, 0);
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(c.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(c.batch_size));
      std::vector<const PreparedSample*> batch;
      for (std::size_t k = start; k < end; ++k) batch.push_back(&train[order[k]]);
      StepStats st = grpo_step(params, ref, batch, c, source,
                               stream.split(StreamPurpose::kStep, static_cast<std::uint64_t>(step)));
      st.step = step++;
      if (on_step) on_step(st);
    }
  }
  return step;
}

std::string step_csv_header() {
  return "step,mean_reward,mean_s,invalid_frac,kl,gen_entropy_bits,wallclock_ms";
}

std::string step_csv_row(const StepStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f",
                static_cast<long long>(s.step), s.mean_reward, s.mean_s, s.invalid_frac, s.kl,
                s.gen_entropy_bits, s.wallclock_ms);
  return buf;
}

}  // namespace groundloop
