#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "groundloop/config.hpp"
#include "groundloop/error.hpp"

using namespace groundloop;

namespace {
ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kContract;
}
}  // namespace

TEST(Config, DefaultsMatchPublishedSetup) {
  const RunConfig c = default_config();
  EXPECT_EQ(c.grpo.group_size, 4);
  EXPECT_EQ(c.grpo.temperature, 0.9);
  EXPECT_EQ(c.grpo.epochs, 10);
  EXPECT_EQ(c.grpo.crop_alpha, 0.15);
  EXPECT_EQ(c.grpo.clip_eps, 0.2);
  EXPECT_EQ(c.grpo.kl_coef, 0.04);
  EXPECT_EQ(c.grpo.area_lambda, 1.0);
  EXPECT_EQ(c.grpo.area_tau, 0.25);
  EXPECT_EQ(c.grpo.invalid_reward, -1.0);
  EXPECT_EQ(c.grpo.adv_std_floor, 1e-8);
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, SectionsAndQualifiedKeys) {
  const RunConfig c = parse_config(
      "# comment\n"
      "run.seed = 9\n"
      "[grpo]\n"
      "  group_size = 6  \n"
      "learning_rate=0.05\n"
      "scene.width = 24\n"
      "[scene]\n"
      "object_mix.parking = 2.5\n"
      "query_mix.implicit = 0\n");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.grpo.group_size, 6);
  EXPECT_EQ(c.grpo.learning_rate, 0.05);
  EXPECT_EQ(c.scene.width, 24);
  EXPECT_EQ(get_config_value(c, "scene.object_mix.parking"), "2.5");
  EXPECT_EQ(c.scene.query_mix.implicit, 0.0);
}

TEST(Config, RejectsBadInput) {
  EXPECT_EQ(kind_of([] { parse_config("bogus.key = 1\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { parse_config("[grpo]\nnope = 1\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { parse_config("run.seed = 1\nrun.seed = 2\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { parse_config("[grpo]\ngroup_size = 4\ngrpo.group_size = 4\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { parse_config("grpo.group_size = four\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { parse_config("grpo.group_size = 4x\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { parse_config("grpo.area_penalty = maybe\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { parse_config("grpo.reward_mode = guess\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { parse_config("just words\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { parse_config("[grpo\n"); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { load_config("/nonexistent/dir/run.cfg"); }), ErrorKind::kIo);
}

TEST(Config, ValidateCatchesCrossFieldProblems) {
  RunConfig c = default_config();
  c.eval_scenes.start = c.train_scenes.start + 5;
  EXPECT_EQ(kind_of([&] { validate(c); }), ErrorKind::kConfig);
  c = default_config();
  c.grpo.group_size = 1;
  EXPECT_EQ(kind_of([&] { validate(c); }), ErrorKind::kConfig);
  c = default_config();
  c.workers = 0;
  EXPECT_EQ(kind_of([&] { validate(c); }), ErrorKind::kConfig);
  c = default_config();
  c.scene.query_mix = {0, 0, 0};
  EXPECT_EQ(kind_of([&] { validate(c); }), ErrorKind::kConfig);
}

TEST(Config, ResolvedTextRoundTrips) {
  RunConfig c = default_config();
  set_config_value(c, "grpo.learning_rate", "0.123456789012345");
  set_config_value(c, "grpo.reward_mode", "extrinsic-iou");
  set_config_value(c, "eval.giou_mode", "mean-generalized-iou");
  set_config_value(c, "run.dir", "some/where");
  const std::string text = resolved_config_text(c);
  const RunConfig back = parse_config(text);
  EXPECT_EQ(resolved_config_text(back), text);
  EXPECT_EQ(config_digest(back), config_digest(c));
  EXPECT_EQ(back.grpo.learning_rate, 0.123456789012345);
  // Every key appears exactly once.
  for (const auto& k : config_keys()) {
    const std::string leaf = k.name.substr(k.name.find('.') + 1) + " = ";
    EXPECT_NE(text.find(leaf), std::string::npos) << k.name;
  }
}

TEST(Config, DigestTracksChanges) {
  RunConfig a = default_config(), b = default_config();
  EXPECT_EQ(config_digest(a), config_digest(b));
  set_config_value(b, "grpo.kl_coef", "0.05");
  EXPECT_NE(config_digest(a), config_digest(b));
}

TEST(Config, ReferenceTagsPublishedDefaults) {
  const std::string ref = config_reference();
  for (const auto& k : config_keys()) {
    const auto at = ref.find("  " + k.name + " = ");
    ASSERT_NE(at, std::string::npos) << k.name;
    const std::string line = ref.substr(at, ref.find('\n', at) - at);
    EXPECT_EQ(line.find("[published]") != std::string::npos, k.published_default) << k.name;
  }
  for (const char* key : {"grpo.group_size", "grpo.temperature", "grpo.epochs", "grpo.crop_alpha"}) {
    bool found = false;
    for (const auto& k : config_keys())
      if (k.name == key) found = k.published_default;
    EXPECT_TRUE(found) << key;
  }
}

TEST(Config, ReferenceDocIsCurrent) {
  std::ifstream in(GROUNDLOOP_CONFIG_REFERENCE);
  ASSERT_TRUE(in) << GROUNDLOOP_CONFIG_REFERENCE;
  std::ostringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), config_reference()) << "regenerate with: groundloop --config-reference > docs/config-reference.txt";
}

TEST(Config, DerivedModuleConfigs) {
  RunConfig c = default_config();
  c.workers = 3;
  c.verifier_query_mix = {0, 1, 0};
  EXPECT_EQ(grpo_config(c).workers, 3);
  EXPECT_EQ(pretrain_config(c).workers, 3);
  EXPECT_EQ(pretrain_config(c).scenes.query_mix.relational, 1.0);
  EXPECT_EQ(pretrain_config(c).scenes.query_mix.direct, 0.0);
  EXPECT_EQ(eval_config(c).crop_alpha, c.grpo.crop_alpha);
}

TEST(Config, DigestIgnoresLocationAndWorkers) {
  RunConfig a = default_config(), b = default_config();
  b.run_dir = "elsewhere";
  b.workers = 8;
  EXPECT_EQ(config_digest(a), config_digest(b));
}
