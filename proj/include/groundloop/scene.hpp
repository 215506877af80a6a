#pragma once

// Procedural categorical scenes, templated queries with unique answers, and
// the feature maps that stand in for visual encoding.

#include <array>
#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "groundloop/geometry.hpp"
#include "groundloop/rng.hpp"

namespace groundloop {

inline constexpr int kNumCategories = 7;

enum class Category : std::uint8_t {
  kWater = 0,
  kField = 1,
  kForest = 2,
  kRoad = 3,
  kBuilding = 4,
  kPlayground = 5,
  kParking = 6,
};

enum class QueryKind : std::uint8_t { kDirect = 0, kRelational = 1, kImplicit = 2 };

enum class Relation : std::uint8_t {
  kNone = 0,
  kAdjacentToRoad = 1,
  kLargestOfCategory = 2,
  kNearWater = 3,
};

const char* category_name(Category c);
const char* query_kind_name(QueryKind k);
const char* relation_name(Relation r);
std::optional<Category> parse_category(const std::string& s);
std::optional<QueryKind> parse_query_kind(const std::string& s);
std::optional<Relation> parse_relation(const std::string& s);

// Integer cell rectangle, inclusive on both ends.
struct CellRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  int cells() const { return width() * height(); }
  friend bool operator==(const CellRect&, const CellRect&) = default;
};

struct SceneObject {
  int id = 0;
  Category category = Category::kBuilding;
  CellRect cells;
  BBox box;  // normalized counterpart of `cells`

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Scene {
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  std::vector<Category> grid;  // row-major, grid[y * width + x]
  std::vector<SceneObject> objects;

  Category at(int x, int y) const { return grid[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct QueryMix {
  double direct = 1.0;
  double relational = 0.0;
  double implicit = 0.0;
};

struct SceneConfig {
  int width = 32;
  int height = 32;
  int min_objects = 2;
  int max_objects = 4;
  int min_side = 10;  // object side length in cells
  int max_side = 15;
  // Object corners and sides snap to multiples of this many cells.
  int align = 1;
  // Relative draw weights over the object categories
  // {field, building, playground, parking}.
  std::array<double, 4> object_mix = {1.0, 1.0, 1.0, 1.0};
  double water_prob = 0.8;
  int max_roads = 2;
  QueryMix query_mix;
  // Ambiguity margins: the largest object must exceed the runner-up by this
  // factor, and non-answers of context relations must stay this many cells
  // clear of the relation's trigger.
  double largest_margin = 1.5;
  int context_gap = 3;
  int max_retries = 400;
};

BBox cell_rect_to_box(const CellRect& r, int width, int height);

// Throws ErrorKind::kGeneration when the requested object count cannot be
// placed within the retry budget.
Scene generate_scene(std::uint64_t seed, const SceneConfig& config);

struct Query {
  QueryKind kind = QueryKind::kDirect;
  Category target = Category::kBuilding;
  Relation relation = Relation::kNone;

  static constexpr int kEmbeddingSize = 14;
  // 7 one-hot category, 4 one-hot relation, 3 one-hot kind.
  std::array<double, kEmbeddingSize> embedding() const;
  friend bool operator==(const Query&, const Query&) = default;
};

// Relation predicates, evaluated on the grid.
bool adjacent_to_road(const Scene& scene, const SceneObject& obj);
bool near_water(const Scene& scene, const SceneObject& obj);
// Chebyshev distance in cells from the rectangle to the nearest road cell;
// a large value when the scene has no road.
int road_gap(const Scene& scene, const SceneObject& obj);
// Euclidean distance in cells from the object centre to the nearest water
// cell centre; +inf when the scene has no water.
double water_distance(const Scene& scene, const SceneObject& obj);
// Whether `obj` satisfies the query predicate (category plus relation).
bool satisfies(const Scene& scene, const SceneObject& obj, const Query& q);

struct QueryAnswer {
  Query query;
  int object_id = -1;
};

// Draws a query of the given kind with a unique, unambiguous answer.
// Returns nothing when the scene admits no such query.
std::optional<QueryAnswer> query_for_kind(const Scene& scene, QueryKind kind,
                                          const SceneConfig& config,
                                          Stream& stream);

// Samples the kind from the configured mix, then resolves it. Throws
// ErrorKind::kGeneration when no unambiguous query of that kind exists.
QueryAnswer generate_query(const Scene& scene, std::uint64_t seed,
                           const SceneConfig& config);

// ---------------------------------------------------------------------------
// Ground-truth access audit.
//
// Ground truth is evaluation-only. While a TrainingScope is alive, every read
// through EvalOnly::get() increments a process-wide counter that tests assert
// to be zero. The reward oracle reads through oracle_get(), which models the
// external teacher and is not counted. Verifier pre-training opens a
// PretrainScope, which is permitted to read.

class TrainingScope {
 public:
  TrainingScope();
  ~TrainingScope();
  TrainingScope(const TrainingScope&) = delete;
  TrainingScope& operator=(const TrainingScope&) = delete;
};

class PretrainScope {
 public:
  PretrainScope();
  ~PretrainScope();
  PretrainScope(const PretrainScope&) = delete;
  PretrainScope& operator=(const PretrainScope&) = delete;
};

bool in_training_scope();
std::uint64_t gt_audit_count();
void reset_gt_audit();

template <typename T>
class EvalOnly {
 public:
  EvalOnly() = default;
  explicit EvalOnly(T value) : value_(std::move(value)) {}

  const T& get() const;
  const T& oracle_get() const { return value_; }

  friend bool operator==(const EvalOnly& a, const EvalOnly& b) {
    return a.value_ == b.value_;
  }

 private:
  T value_{};
};

namespace detail {
void note_gt_read();
}

template <typename T>
const T& EvalOnly<T>::get() const {
  detail::note_gt_read();
  return value_;
}

struct SceneSample {
  std::uint64_t sample_seed = 0;
  Scene scene;
  Query query;
  EvalOnly<BBox> gt;
  EvalOnly<int> gt_object_id;

  friend bool operator==(const SceneSample&, const SceneSample&) = default;
};

// Draws the query kind once, then regenerates scenes from derived seeds until
// one admits an unambiguous query of that kind.
SceneSample make_sample(std::uint64_t sample_seed, const SceneConfig& config);

// Samples with seeds seed_start, seed_start + 1, ...
std::vector<SceneSample> generate_samples(std::uint64_t seed_start, int count,
                                          const SceneConfig& config,
                                          int workers = 1);

// ---------------------------------------------------------------------------
// Features.

inline constexpr int kCropFeatureSize = 18;
inline constexpr int kSceneBlocks = 8;
inline constexpr int kSceneFeatureSize = kSceneBlocks * kSceneBlocks * kNumCategories;
inline constexpr double kRingMargin = 0.25;

// Exact per-category covered area inside `region` (normalized units).
std::array<double, kNumCategories> category_areas(const Scene& scene,
                                                  const BBox& region);

// [7 inside fractions | centre x,y | width, height | 7 ring fractions].
std::array<double, kCropFeatureSize> crop_features(const Scene& scene,
                                                   const CropRegion& crop);

// 8x8 blocks of per-category fractions, index (by * 8 + bx) * 7 + category.
std::vector<double> scene_features(const Scene& scene);

// ---------------------------------------------------------------------------
// "scene-v1" datasets: one header line, then one sample per line.

inline constexpr const char* kSceneFormatVersion = "scene-v1";

std::string serialize_sample(const SceneSample& s);
SceneSample parse_sample(const std::string& line);
void write_dataset(std::ostream& out, const std::vector<SceneSample>& samples);
std::vector<SceneSample> read_dataset(std::istream& in);
void save_dataset(const std::string& path, const std::vector<SceneSample>& samples);
std::vector<SceneSample> load_dataset(const std::string& path);

}  // namespace groundloop
