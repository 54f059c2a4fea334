#pragma once

#include <map>

#include "gocc/encoder.hpp"

namespace gocc {

enum class ObjectKind { box, wall, cylinder };

// Placement and label rules for one object kind.
struct KindSpec {
  ObjectKind kind = ObjectKind::box;
  std::uint16_t label = 3;
  double weight = 1.0;          // sampling weight
  Vec3 size_min = Vec3(1, 1, 1), size_max = Vec3(3, 3, 2);  // meters (cylinder: x = radius)
  bool dynamic = false;         // gets a synthetic radial velocity in radar maps
};

struct SceneSpec {
  std::uint64_t seed = 0;
  GridSpec grid;                     // defaults set by default_scene_spec()
  std::size_t min_objects = 4, max_objects = 10;
  std::vector<KindSpec> kinds;
  std::uint16_t ground_label = 1;    // bottom layer, always present

  // camera rig: yaw-spaced ring at the scene center
  std::size_t camera_count = 4;
  double camera_height = 1.6;        // meters above grid bottom
  double camera_fov_deg = 100.0;
  int image_width = 64, image_height = 48;

  std::size_t num_levels = 2;        // pyramid levels M
  std::size_t feature_channels = 32; // Cf
  std::size_t num_classes = 17;
  std::size_t point_count = 4096;

  double noise_sigma = 0.0;          // additive feature noise per level
  std::map<std::string, double> dropout;  // per-modality cell dropout probability
  double radar_keep_prob = 0.25;     // fraction of populated radar cells kept

  // places one box hidden from every camera behind a full-height wall
  bool occlusion_layout = false;

  std::uint64_t class_code_seed = 0xC0DEC0DEull;  // shared across scenes

  void validate() const;
};

SceneSpec default_scene_spec();

// Deterministic per-class feature codes shared across scenes (the stand-in
// for a pretrained backbone's embedding space). Rows are unit-norm.
std::vector<std::vector<real>> class_codes(std::size_t num_classes, std::size_t code_dim,
                                           std::uint64_t seed);

// 2x2 average pooling with ceil dims; edge cells average the taps they have.
Tensor avg_pool2x2(const Tensor& level);

struct SceneBundle {
  std::uint64_t seed = 0;
  SemanticGrid gt;  // labels populated
  std::vector<Vec3> points;
  std::vector<std::uint16_t> point_classes;
  std::vector<SensorModel> rig;  // cameras
  std::map<Modality, std::vector<FeaturePyramid>> pyramids;
};

// One placed primitive. Box/wall sizes are full extents; cylinders use
// size.x as the radius and size.z as the height. center.z is the bottom.
struct SceneObject {
  ObjectKind kind = ObjectKind::box;
  std::uint16_t label = 3;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  double yaw = 0;
  bool dynamic = false;
  double radial_velocity = 0;
};

std::vector<SceneObject> place_objects(const SceneSpec& spec, Rng& rng);

// Ground layer first, then objects in order (later ones overwrite).
// object_ids holds 1-based indices into `objects` (0 = ground or empty).
void rasterize_objects(const std::vector<SceneObject>& objects, const GridSpec& grid,
                       std::uint16_t ground_label, std::vector<std::uint16_t>& labels,
                       std::vector<std::uint16_t>& object_ids);

// Rasterizes placed primitives (ground first, later objects overwrite),
// samples surface points, builds the rig and all three modality pyramids.
SceneBundle gen_scene(const SceneSpec& spec);

// Feature renderers, exposed for tests and tooling. `pixel_classes`, when
// non-null, receives the per-pixel class id map of level 0.
FeaturePyramid render_camera_features(const SemanticGrid& gt, const SensorModel& camera,
                                      const SceneSpec& spec, Rng& rng,
                                      std::vector<std::uint16_t>* pixel_classes = nullptr);

FeaturePyramid render_bev_features(const SemanticGrid& gt, Modality kind, const SceneSpec& spec,
                                   Rng& rng,
                                   const std::vector<std::pair<Idx3, double>>* dynamic_cells =
                                       nullptr);

// Occlusion experiment preset derived from a base spec.
SceneSpec occlusion_preset(SceneSpec spec);

// Scene bundle directory round trip (gt.gvox, points.gpts, per-level feature
// blobs, manifest.json).
void save_bundle(const std::string& dir, const SceneBundle& bundle, const SceneSpec& spec);
SceneBundle load_bundle(const std::string& dir);

// JSON (de)serialization of SceneSpec; unknown keys are rejected.
std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const std::string& text);

}  // namespace gocc
