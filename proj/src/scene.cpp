#include "groundloop/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "groundloop/error.hpp"

namespace groundloop {

namespace {

constexpr const char* kCategoryNames[kNumCategories] = {
    "water", "field", "forest", "road", "building", "playground", "parking"};
constexpr char kCategoryCodes[kNumCategories] = {'w', 'f', 't', 'r', 'b', 'p', 'k'};
constexpr const char* kKindNames[3] = {"direct", "relational", "implicit"};
constexpr const char* kRelationNames[4] = {"none", "adjacent-to-road",
                                           "largest-of-category", "near-water"};
constexpr Category kObjectCategories[4] = {Category::kField, Category::kBuilding,
                                           Category::kPlayground, Category::kParking};
constexpr double kNearWaterCells = 4.0;
constexpr Category kBackground = Category::kForest;

std::atomic<int> g_training_depth{0};
std::atomic<int> g_pretrain_depth{0};
std::atomic<std::uint64_t> g_gt_reads{0};

int ci(Category c) { return static_cast<int>(c); }

}  // namespace

const char* category_name(Category c) { return kCategoryNames[ci(c)]; }
const char* query_kind_name(QueryKind k) { return kKindNames[static_cast<int>(k)]; }
const char* relation_name(Relation r) { return kRelationNames[static_cast<int>(r)]; }

std::optional<Category> parse_category(const std::string& s) {
  for (int i = 0; i < kNumCategories; ++i)
    if (s == kCategoryNames[i]) return static_cast<Category>(i);
  return std::nullopt;
}

std::optional<QueryKind> parse_query_kind(const std::string& s) {
  for (int i = 0; i < 3; ++i)
    if (s == kKindNames[i]) return static_cast<QueryKind>(i);
  return std::nullopt;
}

std::optional<Relation> parse_relation(const std::string& s) {
  for (int i = 0; i < 4; ++i)
    if (s == kRelationNames[i]) return static_cast<Relation>(i);
  return std::nullopt;
}

BBox cell_rect_to_box(const CellRect& r, int width, int height) {
  return {static_cast<double>(r.x0) / width, static_cast<double>(r.y0) / height,
          static_cast<double>(r.x1 + 1) / width,
          static_cast<double>(r.y1 + 1) / height};
}

// ---------------------------------------------------------------------------
// Scene generation

namespace {

void paint_water(Scene& s, Stream& rng) {
  const double max_r = std::max(2.0, std::min(s.width, s.height) / 6.0);
  const double cx = rng.uniform() * s.width;
  const double cy = rng.uniform() * s.height;
  const double rx = 2.0 + rng.uniform() * (max_r - 2.0);
  const double ry = 2.0 + rng.uniform() * (max_r - 2.0);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const double dx = (x + 0.5 - cx) / rx;
      const double dy = (y + 0.5 - cy) / ry;
      if (dx * dx + dy * dy <= 1.0)
        s.grid[static_cast<std::size_t>(y) * s.width + x] = Category::kWater;
    }
  }
}

void paint_road(Scene& s, Stream& rng) {
  const bool horizontal = rng.bernoulli(0.5);
  if (horizontal) {
    const int y = static_cast<int>(rng.uniform_int(1, s.height - 2));
    for (int x = 0; x < s.width; ++x)
      s.grid[static_cast<std::size_t>(y) * s.width + x] = Category::kRoad;
  } else {
    const int x = static_cast<int>(rng.uniform_int(1, s.width - 2));
    for (int y = 0; y < s.height; ++y)
      s.grid[static_cast<std::size_t>(y) * s.width + x] = Category::kRoad;
  }
}

Category draw_object_category(const SceneConfig& cfg, Stream& rng) {
  double total = 0.0;
  for (double w : cfg.object_mix) total += w;
  double u = rng.uniform() * total;
  for (int i = 0; i < 4; ++i) {
    if (u < cfg.object_mix[i]) return kObjectCategories[i];
    u -= cfg.object_mix[i];
  }
  for (int i = 3; i >= 0; --i)
    if (cfg.object_mix[i] > 0.0) return kObjectCategories[i];
  return kObjectCategories[0];
}

bool try_place(Scene& s, Category cat, int w, int h, int align, Stream& rng) {
  constexpr int kAttempts = 100;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    CellRect r;
    r.x0 = static_cast<int>(rng.uniform_int(0, (s.width - w) / align)) * align;
    r.y0 = static_cast<int>(rng.uniform_int(0, (s.height - h) / align)) * align;
    r.x1 = r.x0 + w - 1;
    r.y1 = r.y0 + h - 1;
    bool ok = true;
    for (int y = r.y0; y <= r.y1 && ok; ++y)
      for (int x = r.x0; x <= r.x1 && ok; ++x)
        ok = s.at(x, y) == kBackground;
    // Keep a one-cell gap so same-category objects never merge.
    for (const auto& o : s.objects) {
      if (!ok) break;
      ok = r.x0 > o.cells.x1 + 1 || o.cells.x0 > r.x1 + 1 || r.y0 > o.cells.y1 + 1 ||
           o.cells.y0 > r.y1 + 1;
    }
    if (!ok) continue;
    for (int y = r.y0; y <= r.y1; ++y)
      for (int x = r.x0; x <= r.x1; ++x)
        s.grid[static_cast<std::size_t>(y) * s.width + x] = cat;
    SceneObject obj;
    obj.id = static_cast<int>(s.objects.size());
    obj.category = cat;
    obj.cells = r;
    obj.box = cell_rect_to_box(r, s.width, s.height);
    s.objects.push_back(obj);
    return true;
  }
  return false;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  if (cfg.width < 8 || cfg.height < 8)
    throw Error(ErrorKind::kConfig, "scene: width and height must be >= 8");
  if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects)
    throw Error(ErrorKind::kGeneration, "scene: object count range must satisfy 1 <= min <= max");
  const int max_w = std::max(1, cfg.width / 2);
  const int max_h = std::max(1, cfg.height / 2);
  const int lo_side = std::clamp(cfg.min_side, 1, std::min(max_w, max_h));
  const int hi_side = std::max(lo_side, std::min(cfg.max_side, std::min(max_w, max_h)));

  Stream rng = Stream(seed).split(StreamPurpose::kScene, 0);
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    Scene s;
    s.seed = seed;
    s.width = cfg.width;
    s.height = cfg.height;
    s.grid.assign(static_cast<std::size_t>(cfg.width) * cfg.height, kBackground);
    if (rng.bernoulli(cfg.water_prob)) paint_water(s, rng);
    const int roads = cfg.max_roads > 0 ? static_cast<int>(rng.uniform_int(0, cfg.max_roads)) : 0;
    for (int i = 0; i < roads; ++i) paint_road(s, rng);

    const int n = static_cast<int>(rng.uniform_int(cfg.min_objects, cfg.max_objects));
    bool placed_all = true;
    for (int i = 0; i < n && placed_all; ++i) {
      const Category cat = draw_object_category(cfg, rng);
      const int a = std::max(1, cfg.align);
      const int w = static_cast<int>(rng.uniform_int((lo_side + a - 1) / a, std::max((lo_side + a - 1) / a, hi_side / a))) * a;
      const int h = static_cast<int>(rng.uniform_int((lo_side + a - 1) / a, std::max((lo_side + a - 1) / a, hi_side / a))) * a;
      placed_all = try_place(s, cat, w, h, a, rng);
    }
    if (placed_all) return s;
  }
  throw Error(ErrorKind::kGeneration,
              "scene: could not place the requested objects within the retry budget");
}

// ---------------------------------------------------------------------------
// Queries

std::array<double, Query::kEmbeddingSize> Query::embedding() const {
  std::array<double, kEmbeddingSize> e{};
  e[ci(target)] = 1.0;
  e[kNumCategories + static_cast<int>(relation)] = 1.0;
  e[kNumCategories + 4 + static_cast<int>(kind)] = 1.0;
  return e;
}

bool adjacent_to_road(const Scene& s, const SceneObject& o) {
  const CellRect& r = o.cells;
  for (int y = r.y0; y <= r.y1; ++y) {
    if (r.x0 > 0 && s.at(r.x0 - 1, y) == Category::kRoad) return true;
    if (r.x1 + 1 < s.width && s.at(r.x1 + 1, y) == Category::kRoad) return true;
  }
  for (int x = r.x0; x <= r.x1; ++x) {
    if (r.y0 > 0 && s.at(x, r.y0 - 1) == Category::kRoad) return true;
    if (r.y1 + 1 < s.height && s.at(x, r.y1 + 1) == Category::kRoad) return true;
  }
  return false;
}

int road_gap(const Scene& s, const SceneObject& o) {
  const CellRect& r = o.cells;
  int best = std::numeric_limits<int>::max();
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (s.at(x, y) != Category::kRoad) continue;
      const int dx = x < r.x0 ? r.x0 - x : (x > r.x1 ? x - r.x1 : 0);
      const int dy = y < r.y0 ? r.y0 - y : (y > r.y1 ? y - r.y1 : 0);
      best = std::min(best, std::max(dx, dy));
    }
  }
  return best;
}

double water_distance(const Scene& s, const SceneObject& o) {
  const double cx = (o.cells.x0 + o.cells.x1 + 1) / 2.0;
  const double cy = (o.cells.y0 + o.cells.y1 + 1) / 2.0;
  double best = std::numeric_limits<double>::infinity();
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      if (s.at(x, y) != Category::kWater) continue;
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
  }
  return best;
}

bool near_water(const Scene& s, const SceneObject& o) {
  return water_distance(s, o) <= kNearWaterCells;
}

namespace {

bool strictly_largest(const Scene& s, const SceneObject& o) {
  for (const auto& other : s.objects)
    if (other.id != o.id && other.category == o.category &&
        other.cells.cells() >= o.cells.cells())
      return false;
  return true;
}

std::vector<const SceneObject*> of_category(const Scene& s, Category c) {
  std::vector<const SceneObject*> out;
  for (const auto& o : s.objects)
    if (o.category == c) out.push_back(&o);
  return out;
}

}  // namespace

bool satisfies(const Scene& s, const SceneObject& o, const Query& q) {
  if (o.category != q.target) return false;
  switch (q.relation) {
    case Relation::kNone: return true;
    case Relation::kAdjacentToRoad: return adjacent_to_road(s, o);
    case Relation::kLargestOfCategory: return strictly_largest(s, o);
    case Relation::kNearWater: return near_water(s, o);
  }
  return false;
}

std::optional<QueryAnswer> query_for_kind(const Scene& s, QueryKind kind,
                                          const SceneConfig& cfg, Stream& rng) {
  std::vector<QueryAnswer> candidates;
  for (Category cat : kObjectCategories) {
    const auto objs = of_category(s, cat);
    if (objs.empty()) continue;
    switch (kind) {
      case QueryKind::kDirect:
        if (objs.size() == 1)
          candidates.push_back({{kind, cat, Relation::kNone}, objs[0]->id});
        break;
      case QueryKind::kRelational: {
        if (objs.size() < 2) break;
        std::vector<const SceneObject*> sorted = objs;
        std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
          return a->cells.cells() > b->cells.cells();
        });
        const double top = sorted[0]->cells.cells();
        const double second = sorted[1]->cells.cells();
        const bool clear = cfg.largest_margin > 1.0 ? top >= cfg.largest_margin * second
                                                    : top > second;
        if (clear)
          candidates.push_back({{kind, cat, Relation::kLargestOfCategory}, sorted[0]->id});
        break;
      }
      case QueryKind::kImplicit: {
        if (objs.size() < 2) break;
        for (Relation rel : {Relation::kAdjacentToRoad, Relation::kNearWater}) {
          const SceneObject* answer = nullptr;
          bool ambiguous = false;
          for (const auto* o : objs) {
            const bool hit = rel == Relation::kAdjacentToRoad ? adjacent_to_road(s, *o)
                                                              : near_water(s, *o);
            if (hit) {
              ambiguous = ambiguous || answer != nullptr;
              answer = o;
            } else {
              const bool clear =
                  rel == Relation::kAdjacentToRoad
                      ? road_gap(s, *o) >= cfg.context_gap
                      : water_distance(s, *o) > kNearWaterCells + cfg.context_gap;
              ambiguous = ambiguous || !clear;
            }
          }
          if (answer && !ambiguous) candidates.push_back({{kind, cat, rel}, answer->id});
        }
        break;
      }
    }
  }
  if (candidates.empty()) return std::nullopt;
  const auto pick = rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1);
  return candidates[static_cast<std::size_t>(pick)];
}

namespace {

QueryKind draw_kind(const QueryMix& mix, Stream& rng) {
  const double total = mix.direct + mix.relational + mix.implicit;
  if (!(total > 0.0)) throw Error(ErrorKind::kConfig, "scene: query mix has no positive weight");
  const double u = rng.uniform() * total;
  if (u < mix.direct) return QueryKind::kDirect;
  if (u < mix.direct + mix.relational || mix.implicit <= 0.0)
    return mix.relational > 0.0 ? QueryKind::kRelational : QueryKind::kDirect;
  return QueryKind::kImplicit;
}

}  // namespace

QueryAnswer generate_query(const Scene& scene, std::uint64_t seed, const SceneConfig& cfg) {
  Stream rng = Stream(seed).split(StreamPurpose::kQuery, 0);
  const QueryKind kind = draw_kind(cfg.query_mix, rng);
  auto ans = query_for_kind(scene, kind, cfg, rng);
  if (!ans)
    throw Error(ErrorKind::kGeneration,
                std::string("query: no unambiguous ") + query_kind_name(kind) + " query");
  return *ans;
}

SceneSample make_sample(std::uint64_t sample_seed, const SceneConfig& cfg) {
  const Stream root(sample_seed);
  Stream kind_rng = root.split(StreamPurpose::kQuery, 0);
  const QueryKind kind = draw_kind(cfg.query_mix, kind_rng);
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const std::uint64_t scene_seed =
        root.split(StreamPurpose::kScene, static_cast<std::uint64_t>(attempt)).key();
    Scene scene;
    try {
      scene = generate_scene(scene_seed, cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kGeneration) throw;
      continue;
    }
    Stream qrng = root.split(StreamPurpose::kQuery, static_cast<std::uint64_t>(attempt) + 1);
    auto ans = query_for_kind(scene, kind, cfg, qrng);
    if (!ans) continue;
    SceneSample out;
    out.sample_seed = sample_seed;
    out.query = ans->query;
    out.gt = EvalOnly<BBox>(scene.objects[static_cast<std::size_t>(ans->object_id)].box);
    out.gt_object_id = EvalOnly<int>(ans->object_id);
    out.scene = std::move(scene);
    return out;
  }
  throw Error(ErrorKind::kGeneration,
              std::string("sample: no scene admitted a ") + query_kind_name(kind) +
                  " query within the retry budget");
}

std::vector<SceneSample> generate_samples(std::uint64_t seed_start, int count,
                                          const SceneConfig& cfg, int workers) {
  require(count >= 0, "generate_samples: negative count");
  std::vector<SceneSample> out(static_cast<std::size_t>(count));
  std::vector<std::string> errors(out.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
  for (int i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = make_sample(seed_start + static_cast<std::uint64_t>(i), cfg);
    } catch (const Error& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(ErrorKind::kGeneration, e);
  return out;
}

// ---------------------------------------------------------------------------
// Audit

TrainingScope::TrainingScope() { ++g_training_depth; }
TrainingScope::~TrainingScope() { --g_training_depth; }
PretrainScope::PretrainScope() { ++g_pretrain_depth; }
PretrainScope::~PretrainScope() { --g_pretrain_depth; }

bool in_training_scope() { return g_training_depth.load() > 0; }
std::uint64_t gt_audit_count() { return g_gt_reads.load(); }
void reset_gt_audit() { g_gt_reads.store(0); }

void detail::note_gt_read() {
  if (g_training_depth.load(std::memory_order_relaxed) > 0 &&
      g_pretrain_depth.load(std::memory_order_relaxed) == 0)
    g_gt_reads.fetch_add(1, std::memory_order_relaxed);
}

// ---------------------------------------------------------------------------
// Features

std::array<double, kNumCategories> category_areas(const Scene& s, const BBox& region) {
  std::array<double, kNumCategories> areas{};
  // Work in cell units, convert once at the end.
  const double X1 = region.x1 * s.width, X2 = region.x2 * s.width;
  const double Y1 = region.y1 * s.height, Y2 = region.y2 * s.height;
  const int i0 = std::max(0, static_cast<int>(std::floor(X1)));
  const int i1 = std::min(s.width - 1, static_cast<int>(std::ceil(X2)) - 1);
  const int j0 = std::max(0, static_cast<int>(std::floor(Y1)));
  const int j1 = std::min(s.height - 1, static_cast<int>(std::ceil(Y2)) - 1);
  for (int j = j0; j <= j1; ++j) {
    const double oy = std::min(Y2, j + 1.0) - std::max(Y1, static_cast<double>(j));
    if (oy <= 0.0) continue;
    for (int i = i0; i <= i1; ++i) {
      const double ox = std::min(X2, i + 1.0) - std::max(X1, static_cast<double>(i));
      if (ox <= 0.0) continue;
      areas[ci(s.at(i, j))] += ox * oy;
    }
  }
  const double cell = 1.0 / (static_cast<double>(s.width) * s.height);
  for (double& a : areas) a *= cell;
  return areas;
}

namespace {

void normalize_into(const std::array<double, kNumCategories>& areas, double* out) {
  double total = 0.0;
  for (double a : areas) total += a;
  for (int c = 0; c < kNumCategories; ++c) out[c] = total > 0.0 ? areas[c] / total : 0.0;
}

}  // namespace

std::array<double, kCropFeatureSize> crop_features(const Scene& s, const CropRegion& crop) {
  require(is_valid(crop.box), "crop_features: invalid crop");
  std::array<double, kCropFeatureSize> f{};
  const auto inner = category_areas(s, crop.box);
  normalize_into(inner, f.data());
  f[7] = 0.5 * (crop.box.x1 + crop.box.x2);
  f[8] = 0.5 * (crop.box.y1 + crop.box.y2);
  f[9] = crop.box.width();
  f[10] = crop.box.height();
  const BBox outer = pad_and_clamp(crop.box, kRingMargin).box;
  if (outer == crop.box) return f;
  const auto outer_areas = category_areas(s, outer);
  std::array<double, kNumCategories> ring{};
  double total = 0.0;
  for (int c = 0; c < kNumCategories; ++c) {
    ring[c] = std::max(0.0, outer_areas[c] - inner[c]);
    total += ring[c];
  }
  if (total <= 1e-15) return f;
  for (int c = 0; c < kNumCategories; ++c) f[11 + c] = ring[c] / total;
  return f;
}

std::vector<double> scene_features(const Scene& s) {
  std::vector<double> f(kSceneFeatureSize, 0.0);
  for (int by = 0; by < kSceneBlocks; ++by) {
    for (int bx = 0; bx < kSceneBlocks; ++bx) {
      const BBox block{static_cast<double>(bx) / kSceneBlocks,
                       static_cast<double>(by) / kSceneBlocks,
                       static_cast<double>(bx + 1) / kSceneBlocks,
                       static_cast<double>(by + 1) / kSceneBlocks};
      normalize_into(category_areas(s, block),
                     f.data() + (by * kSceneBlocks + bx) * kNumCategories);
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// scene-v1 serialization

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int category_from_code(char c) {
  for (int i = 0; i < kNumCategories; ++i)
    if (kCategoryCodes[i] == c) return i;
  return -1;
}

[[noreturn]] void bad_line(const std::string& why) {
  throw Error(ErrorKind::kIo, "scene-v1: malformed sample line (" + why + ")");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

long long to_int(const std::string& s) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) bad_line("integer " + s);
    return v;
  } catch (const std::logic_error&) {
    bad_line("integer " + s);
  }
}

std::uint64_t to_u64(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) bad_line("seed " + s);
  try {
    return std::stoull(s);
  } catch (const std::logic_error&) {
    bad_line("seed " + s);
  }
}

double to_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) bad_line("number " + s);
    return v;
  } catch (const std::logic_error&) {
    bad_line("number " + s);
  }
}

}  // namespace

std::string serialize_sample(const SceneSample& smp) {
  const Scene& s = smp.scene;
  std::string out;
  out += "seed=" + std::to_string(smp.sample_seed);
  out += " scene=" + std::to_string(s.seed);
  out += " size=" + std::to_string(s.width) + "x" + std::to_string(s.height);
  out += " grid=";
  std::size_t i = 0;
  while (i < s.grid.size()) {
    std::size_t j = i;
    while (j < s.grid.size() && s.grid[j] == s.grid[i]) ++j;
    out += std::to_string(j - i);
    out.push_back(kCategoryCodes[ci(s.grid[i])]);
    i = j;
  }
  out += " objects=";
  for (std::size_t k = 0; k < s.objects.size(); ++k) {
    const auto& o = s.objects[k];
    if (k) out.push_back(',');
    out += std::to_string(o.id) + ":" + category_name(o.category) + ":" +
           std::to_string(o.cells.x0) + ":" + std::to_string(o.cells.y0) + ":" +
           std::to_string(o.cells.x1) + ":" + std::to_string(o.cells.y1);
  }
  out += std::string(" query=") + query_kind_name(smp.query.kind) + ":" +
         category_name(smp.query.target) + ":" + relation_name(smp.query.relation);
  const BBox& gt = smp.gt.oracle_get();
  out += " gt=" + std::to_string(smp.gt_object_id.oracle_get()) + ":" + fmt_double(gt.x1) +
         ":" + fmt_double(gt.y1) + ":" + fmt_double(gt.x2) + ":" + fmt_double(gt.y2);
  return out;
}

SceneSample parse_sample(const std::string& line) {
  SceneSample smp;
  Scene& s = smp.scene;
  bool seen[7] = {};
  std::istringstream iss(line);
  std::string tok;
  int field = 0;
  const char* keys[7] = {"seed", "scene", "size", "grid", "objects", "query", "gt"};
  while (iss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) bad_line("token without '='");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (field >= 7 || key != keys[field]) bad_line("unexpected key " + key);
    seen[field] = true;
    switch (field++) {
      case 0: smp.sample_seed = to_u64(val); break;
      case 1: s.seed = to_u64(val); break;
      case 2: {
        const auto parts = split(val, 'x');
        if (parts.size() != 2) bad_line("size");
        s.width = static_cast<int>(to_int(parts[0]));
        s.height = static_cast<int>(to_int(parts[1]));
        if (s.width < 1 || s.height < 1) bad_line("size");
        break;
      }
      case 3: {
        std::size_t pos = 0;
        while (pos < val.size()) {
          std::size_t end = pos;
          while (end < val.size() && std::isdigit(static_cast<unsigned char>(val[end]))) ++end;
          if (end == pos || end >= val.size()) bad_line("grid run");
          const long long n = to_int(val.substr(pos, end - pos));
          const int c = category_from_code(val[end]);
          if (c < 0 || n <= 0) bad_line("grid code");
          s.grid.insert(s.grid.end(), static_cast<std::size_t>(n), static_cast<Category>(c));
          pos = end + 1;
        }
        if (s.grid.size() != static_cast<std::size_t>(s.width) * s.height) bad_line("grid length");
        break;
      }
      case 4: {
        if (val.empty()) break;
        for (const auto& item : split(val, ',')) {
          const auto p = split(item, ':');
          if (p.size() != 6) bad_line("object");
          SceneObject o;
          o.id = static_cast<int>(to_int(p[0]));
          const auto cat = parse_category(p[1]);
          if (!cat) bad_line("object category");
          o.category = *cat;
          o.cells = {static_cast<int>(to_int(p[2])), static_cast<int>(to_int(p[3])),
                     static_cast<int>(to_int(p[4])), static_cast<int>(to_int(p[5]))};
          o.box = cell_rect_to_box(o.cells, s.width, s.height);
          if (o.id != static_cast<int>(s.objects.size())) bad_line("object ids");
          s.objects.push_back(o);
        }
        break;
      }
      case 5: {
        const auto p = split(val, ':');
        if (p.size() != 3) bad_line("query");
        const auto k = parse_query_kind(p[0]);
        const auto c = parse_category(p[1]);
        const auto r = parse_relation(p[2]);
        if (!k || !c || !r) bad_line("query fields");
        smp.query = {*k, *c, *r};
        break;
      }
      case 6: {
        const auto p = split(val, ':');
        if (p.size() != 5) bad_line("gt");
        const int id = static_cast<int>(to_int(p[0]));
        if (id < 0 || id >= static_cast<int>(s.objects.size())) bad_line("gt object id");
        const BBox gt{to_double(p[1]), to_double(p[2]), to_double(p[3]), to_double(p[4])};
        if (!(gt == s.objects[static_cast<std::size_t>(id)].box)) bad_line("gt box disagrees with object");
        smp.gt = EvalOnly<BBox>(gt);
        smp.gt_object_id = EvalOnly<int>(id);
        break;
      }
    }
  }
  for (bool b : seen)
    if (!b) bad_line("missing field");
  return smp;
}

void write_dataset(std::ostream& out, const std::vector<SceneSample>& samples) {
  out << kSceneFormatVersion << " count=" << samples.size() << "\n";
  for (const auto& s : samples) out << serialize_sample(s) << "\n";
}

std::vector<SceneSample> read_dataset(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorKind::kIo, "scene-v1: empty dataset");
  std::istringstream hs(header);
  std::string version, count_tok;
  hs >> version >> count_tok;
  if (version != kSceneFormatVersion)
    throw Error(ErrorKind::kIo, "dataset: unsupported format '" + version + "'");
  if (count_tok.rfind("count=", 0) != 0) throw Error(ErrorKind::kIo, "scene-v1: header lacks count");
  const long long count = to_int(count_tok.substr(6));
  std::vector<SceneSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_sample(line));
  }
  if (static_cast<long long>(out.size()) != count)
    throw Error(ErrorKind::kIo, "scene-v1: header count does not match data lines");
  return out;
}

void save_dataset(const std::string& path, const std::vector<SceneSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  write_dataset(out, samples);
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path);
}

std::vector<SceneSample> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path);
  return read_dataset(in);
}

}  // namespace groundloop
