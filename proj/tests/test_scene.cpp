#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "groundloop/error.hpp"
#include "groundloop/scene.hpp"
#include "oracles.hpp"

using namespace groundloop;

namespace {

Scene blank(int w, int h, Category fill = Category::kForest) {
  Scene s;
  s.width = w;
  s.height = h;
  s.grid.assign(static_cast<std::size_t>(w * h), fill);
  return s;
}

void paint(Scene& s, const CellRect& r, Category c) {
  for (int y = r.y0; y <= r.y1; ++y)
    for (int x = r.x0; x <= r.x1; ++x) s.grid[static_cast<std::size_t>(y * s.width + x)] = c;
}

int add_object(Scene& s, const CellRect& r, Category c) {
  paint(s, r, c);
  SceneObject o;
  o.id = static_cast<int>(s.objects.size());
  o.category = c;
  o.cells = r;
  o.box = cell_rect_to_box(r, s.width, s.height);
  s.objects.push_back(o);
  return o.id;
}

// Cell-count fraction of each category inside a cell-aligned box.
std::array<double, kNumCategories> pixel_fractions(const Scene& s, const CellRect& r) {
  std::array<double, kNumCategories> f{};
  for (int y = r.y0; y <= r.y1; ++y)
    for (int x = r.x0; x <= r.x1; ++x) f[static_cast<int>(s.at(x, y))] += 1.0;
  for (double& v : f) v /= r.cells();
  return f;
}

}  // namespace

TEST(Scene, GenerationIsDeterministicPerSeed) {
  const SceneConfig cfg;
  const Scene a = generate_scene(7, cfg);
  const Scene b = generate_scene(7, cfg);
  EXPECT_EQ(a, b);
  const Scene c = generate_scene(8, cfg);
  EXPECT_NE(a.grid, c.grid);
}

TEST(Scene, ForcedSingleObject) {
  SceneConfig cfg;
  cfg.width = cfg.height = 8;
  cfg.min_objects = cfg.max_objects = 1;
  cfg.min_side = 2;
  cfg.max_side = 4;
  const Scene s = generate_scene(1, cfg);
  EXPECT_EQ(s.objects.size(), 1u);
  EXPECT_EQ(s.grid.size(), 64u);
}

TEST(Scene, BadConfigsAreRejected) {
  SceneConfig cfg;
  cfg.width = 4;
  EXPECT_THROW(generate_scene(1, cfg), Error);
  cfg = SceneConfig{};
  cfg.min_objects = 3;
  cfg.max_objects = 2;
  EXPECT_THROW(generate_scene(1, cfg), Error);
}

TEST(Scene, ObjectsAreRasterizedAndDisjoint) {
  const SceneConfig cfg;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Scene s = generate_scene(seed, cfg);
    ASSERT_GE(static_cast<int>(s.objects.size()), cfg.min_objects);
    ASSERT_LE(static_cast<int>(s.objects.size()), cfg.max_objects);
    std::set<std::pair<int, int>> used;
    for (const auto& o : s.objects) {
      EXPECT_EQ(o.box, cell_rect_to_box(o.cells, s.width, s.height));
      for (int y = o.cells.y0; y <= o.cells.y1; ++y)
        for (int x = o.cells.x0; x <= o.cells.x1; ++x) {
          ASSERT_EQ(s.at(x, y), o.category);
          ASSERT_TRUE(used.insert({x, y}).second) << "objects overlap";
        }
    }
  }
}

TEST(Query, DirectWithSinglePlayground) {
  Scene s = blank(32, 32);
  const int id = add_object(s, {4, 4, 13, 15}, Category::kPlayground);
  SceneConfig cfg;
  Stream rng(3);
  const auto ans = query_for_kind(s, QueryKind::kDirect, cfg, rng);
  ASSERT_TRUE(ans.has_value());
  EXPECT_EQ(ans->query.target, Category::kPlayground);
  EXPECT_EQ(ans->object_id, id);
  EXPECT_EQ(s.objects[static_cast<std::size_t>(ans->object_id)].box, cell_rect_to_box({4, 4, 13, 15}, 32, 32));
}

TEST(Query, RelationalPicksLargerBuilding) {
  // 10x10 grid: 2 cells = area 0.02, 5 cells = area 0.05.
  Scene s = blank(10, 10);
  add_object(s, {0, 0, 1, 0}, Category::kBuilding);
  const int big = add_object(s, {0, 5, 4, 5}, Category::kBuilding);
  EXPECT_NEAR(s.objects[0].box.area(), 0.02, 1e-12);
  EXPECT_NEAR(s.objects[1].box.area(), 0.05, 1e-12);
  Stream rng(1);
  const auto ans = query_for_kind(s, QueryKind::kRelational, SceneConfig{}, rng);
  ASSERT_TRUE(ans.has_value());
  EXPECT_EQ(ans->query.relation, Relation::kLargestOfCategory);
  EXPECT_EQ(ans->object_id, big);
}

TEST(Query, ImplicitRoadAdjacencyMatchesBruteForce) {
  Scene s = blank(32, 32);
  paint(s, {16, 0, 16, 31}, Category::kRoad);
  add_object(s, {10, 4, 15, 12}, Category::kField);
  add_object(s, {0, 20, 4, 27}, Category::kField);
  add_object(s, {24, 20, 29, 27}, Category::kField);
  Stream rng(11);
  const auto ans = query_for_kind(s, QueryKind::kImplicit, SceneConfig{}, rng);
  ASSERT_TRUE(ans.has_value());
  EXPECT_EQ(ans->query.relation, Relation::kAdjacentToRoad);
  int touching = 0, which = -1;
  for (const auto& o : s.objects)
    if (oracle::touches(s, o.cells, Category::kRoad)) ++touching, which = o.id;
  ASSERT_EQ(touching, 1);
  EXPECT_EQ(ans->object_id, which);
}

TEST(Query, AmbiguousImplicitIsRejected) {
  Scene s = blank(32, 32);
  paint(s, {16, 0, 16, 31}, Category::kRoad);
  add_object(s, {10, 4, 15, 12}, Category::kField);
  add_object(s, {17, 20, 22, 27}, Category::kField);  // also touches the road
  Stream rng(11);
  EXPECT_FALSE(query_for_kind(s, QueryKind::kImplicit, SceneConfig{}, rng).has_value());
}

// Every generated answer is checked against a scan that recomputes the
// relation from the grid.
TEST(Query, GeneratedAnswersSatisfyBruteForceRelations) {
  SceneConfig cfg;
  cfg.query_mix = {1.0, 1.0, 1.0};
  const auto samples = generate_samples(500, 150, cfg, 2);
  int kinds[3] = {0, 0, 0};
  for (const auto& smp : samples) {
    const Scene& s = smp.scene;
    const Query& q = smp.query;
    const SceneObject& gt = s.objects[static_cast<std::size_t>(smp.gt_object_id.get())];
    ASSERT_EQ(gt.box, smp.gt.get());
    ASSERT_EQ(gt.category, q.target);
    ++kinds[static_cast<int>(q.kind)];
    std::vector<const SceneObject*> same;
    for (const auto& o : s.objects)
      if (o.category == q.target) same.push_back(&o);
    switch (q.relation) {
      case Relation::kNone:
        EXPECT_EQ(same.size(), 1u);
        break;
      case Relation::kLargestOfCategory:
        for (const auto* o : same) {
          if (o->id == gt.id) continue;
          EXPECT_GE(gt.cells.cells(), 1.5 * o->cells.cells());
        }
        break;
      case Relation::kAdjacentToRoad:
        for (const auto* o : same) EXPECT_EQ(oracle::touches(s, o->cells, Category::kRoad), o->id == gt.id);
        break;
      case Relation::kNearWater: {
        auto dist = [&](const SceneObject& o) {
          double best = 1e300;
          const double cx = (o.cells.x0 + o.cells.x1 + 1) / 2.0, cy = (o.cells.y0 + o.cells.y1 + 1) / 2.0;
          for (int y = 0; y < s.height; ++y)
            for (int x = 0; x < s.width; ++x)
              if (s.at(x, y) == Category::kWater) best = std::min(best, std::hypot(x + 0.5 - cx, y + 0.5 - cy));
          return best;
        };
        for (const auto* o : same) EXPECT_EQ(dist(*o) <= 4.0, o->id == gt.id);
        break;
      }
    }
  }
  EXPECT_GT(kinds[0], 0);
  EXPECT_GT(kinds[1], 0);
  EXPECT_GT(kinds[2], 0);
}

TEST(Query, ForcedDirectMix) {
  SceneConfig cfg;
  cfg.query_mix = {1.0, 0.0, 0.0};
  for (const auto& s : generate_samples(0, 60, cfg)) EXPECT_EQ(s.query.kind, QueryKind::kDirect);
}

TEST(Features, PureWaterCrop) {
  Scene s = blank(32, 32, Category::kField);
  paint(s, {0, 0, 15, 31}, Category::kWater);
  const auto f = crop_features(s, pad_and_clamp({0.0, 0.0, 0.5, 1.0}, 0.0));
  EXPECT_EQ(f[0], 1.0);
  for (int c = 1; c < 7; ++c) EXPECT_EQ(f[c], 0.0);
  EXPECT_DOUBLE_EQ(f[7], 0.25);
  EXPECT_DOUBLE_EQ(f[9], 0.5);
}

TEST(Features, FullImageHasEmptyRing) {
  const Scene s = generate_scene(7, SceneConfig{});
  const auto f = crop_features(s, pad_and_clamp({0, 0, 1, 1}, 0.0));
  for (int i = 11; i < 18; ++i) EXPECT_EQ(f[i], 0.0);
  double inside = 0;
  for (int i = 0; i < 7; ++i) inside += f[i];
  EXPECT_NEAR(inside, 1.0, 1e-12);
}

TEST(Features, HalfFieldHalfRoadMatchesPixelCount) {
  Scene s = blank(32, 32, Category::kField);
  paint(s, {16, 0, 31, 31}, Category::kRoad);
  const CellRect r{8, 0, 23, 31};
  const auto f = crop_features(s, pad_and_clamp(cell_rect_to_box(r, 32, 32), 0.0));
  const auto want = pixel_fractions(s, r);
  for (int c = 0; c < 7; ++c) EXPECT_NEAR(f[c], want[c], 1e-12);
  EXPECT_NEAR(f[static_cast<int>(Category::kField)], 0.5, 1e-12);
  EXPECT_NEAR(f[static_cast<int>(Category::kRoad)], 0.5, 1e-12);
}

TEST(Features, CategoryAreasMatchPixelCountOnRandomCellBoxes) {
  const Scene s = generate_scene(21, SceneConfig{});
  Stream rng(4);
  for (int t = 0; t < 500; ++t) {
    int x0 = static_cast<int>(rng.uniform_int(0, 31)), x1 = static_cast<int>(rng.uniform_int(0, 31));
    int y0 = static_cast<int>(rng.uniform_int(0, 31)), y1 = static_cast<int>(rng.uniform_int(0, 31));
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    const CellRect r{x0, y0, x1, y1};
    const auto f = crop_features(s, pad_and_clamp(cell_rect_to_box(r, 32, 32), 0.0));
    const auto want = pixel_fractions(s, r);
    for (int c = 0; c < 7; ++c) ASSERT_NEAR(f[c], want[c], 1e-12);
  }
}

TEST(Features, SceneFeaturesUniformAndSplit) {
  const Scene field = blank(32, 32, Category::kField);
  const auto f = scene_features(field);
  ASSERT_EQ(static_cast<int>(f.size()), kSceneFeatureSize);
  for (int b = 0; b < 64; ++b)
    for (int c = 0; c < 7; ++c) EXPECT_EQ(f[static_cast<std::size_t>(b * 7 + c)], c == 1 ? 1.0 : 0.0);

  Scene split = blank(32, 32, Category::kField);
  paint(split, {0, 0, 15, 31}, Category::kWater);
  const auto g = scene_features(split);
  EXPECT_EQ(g, scene_features(split));
  for (int by = 0; by < 8; ++by)
    for (int bx = 0; bx < 8; ++bx) {
      const int want = bx < 4 ? 0 : 1;
      for (int c = 0; c < 7; ++c)
        EXPECT_EQ(g[static_cast<std::size_t>((by * 8 + bx) * 7 + c)], c == want ? 1.0 : 0.0);
    }
}

TEST(Dataset, RoundTripAndHeader) {
  SceneConfig cfg;
  cfg.query_mix = {1.0, 1.0, 1.0};
  const auto samples = generate_samples(40, 100, cfg);
  std::stringstream ss;
  write_dataset(ss, samples);
  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("scene-v1", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 101);
  std::stringstream in(text);
  EXPECT_EQ(read_dataset(in), samples);
}

TEST(Dataset, MalformedInputIsIoError) {
  std::stringstream bad("scene-v1 count=2\nseed=0 nonsense\n");
  try {
    read_dataset(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
  }
}

TEST(Dataset, WorkerCountDoesNotChangeSamples) {
  SceneConfig cfg;
  cfg.query_mix = {1.0, 1.0, 1.0};
  EXPECT_EQ(generate_samples(0, 40, cfg, 1), generate_samples(0, 40, cfg, 4));
}

TEST(Audit, CountsOnlyTrainingScopeReads) {
  const auto samples = generate_samples(0, 1, SceneConfig{});
  reset_gt_audit();
  (void)samples[0].gt.get();
  EXPECT_EQ(gt_audit_count(), 0u);
  {
    TrainingScope scope;
    EXPECT_TRUE(in_training_scope());
    (void)samples[0].gt.oracle_get();
    EXPECT_EQ(gt_audit_count(), 0u);
    (void)samples[0].gt.get();
    (void)samples[0].gt_object_id.get();
    EXPECT_EQ(gt_audit_count(), 2u);
  }
  EXPECT_FALSE(in_training_scope());
  reset_gt_audit();
}
