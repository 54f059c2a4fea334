#include "gocc/scene.hpp"

#include <cmath>
#include <filesystem>

#include "gocc/io.hpp"
#include "gocc/json_util.hpp"

namespace fs = std::filesystem;

namespace gocc {

void SceneSpec::validate() const {
  grid.validate();
  require(num_classes >= 2, "scene needs at least empty + one class");
  require(ground_label >= 1 && ground_label < num_classes, "ground label out of range");
  for (const auto& k : kinds) {
    require(k.label >= 1 && k.label < num_classes, "object label out of range");
    require(k.size_min.minCoeff() > 0, "object sizes must be positive");
    for (int i = 0; i < 3; ++i) require(k.size_min[i] <= k.size_max[i], "size range inverted");
    require(k.weight >= 0, "kind weight must be non-negative");
  }
  require(min_objects <= max_objects, "object count range inverted");
  require(camera_count >= 1, "need at least one camera");
  require(image_width >= 4 && image_height >= 4, "image dims too small");
  require(num_levels >= 1, "need at least one pyramid level");
  require(feature_channels >= 4, "feature channels must cover code + aux channels");
  require(radar_keep_prob > 0.0 && radar_keep_prob <= 1.0, "radar keep prob in (0,1]");
}

SceneSpec default_scene_spec() {
  SceneSpec spec;
  spec.grid.min_corner = Vec3(-16, -16, 0);
  spec.grid.voxel_size = 0.5;
  spec.grid.dims = Idx3(64, 64, 8);
  spec.kinds = {
      {ObjectKind::box, 3, 1.0, Vec3(1.0, 1.0, 1.0), Vec3(3.5, 3.5, 2.0), true},
      {ObjectKind::wall, 2, 0.7, Vec3(3.0, 0.4, 1.5), Vec3(8.0, 0.8, 3.5), false},
      {ObjectKind::cylinder, 4, 0.6, Vec3(0.5, 0.5, 1.0), Vec3(1.6, 1.6, 3.5), false},
  };
  return spec;
}

std::vector<std::vector<real>> class_codes(std::size_t num_classes, std::size_t code_dim,
                                           std::uint64_t seed) {
  Rng rng(splitmix64(seed));
  std::vector<std::vector<real>> codes(num_classes, std::vector<real>(code_dim, real(0)));
  for (std::size_t c = 1; c < num_classes; ++c) {  // class 0 (empty) stays zero
    double norm_sq = 0;
    for (auto& v : codes[c]) {
      v = real(rng.normal());
      norm_sq += double(v) * double(v);
    }
    const real inv = real(1.0 / std::sqrt(std::max(norm_sq, 1e-12)));
    for (auto& v : codes[c]) v *= inv;
  }
  return codes;
}

namespace {

bool contains(const SceneObject& o, const Vec3& p) {
  const double dz = p[2] - o.center[2];
  if (dz < 0 || dz > o.size[2]) return false;
  const double dx = p[0] - o.center[0], dy = p[1] - o.center[1];
  if (o.kind == ObjectKind::cylinder) {
    return dx * dx + dy * dy <= o.size[0] * o.size[0];
  }
  const double c = std::cos(-o.yaw), s = std::sin(-o.yaw);
  const double lx = c * dx - s * dy, ly = s * dx + c * dy;
  return std::abs(lx) <= 0.5 * o.size[0] && std::abs(ly) <= 0.5 * o.size[1];
}

}  // namespace

void rasterize_objects(const std::vector<SceneObject>& objects, const GridSpec& grid,
                       std::uint16_t ground_label, std::vector<std::uint16_t>& labels,
                       std::vector<std::uint16_t>& object_ids) {

  const std::size_t v = grid.voxel_count();
  labels.assign(v, 0);
  object_ids.assign(v, 0);
  // ground plane first: the whole bottom layer
  for (int y = 0; y < grid.dims[1]; ++y)
    for (int x = 0; x < grid.dims[0]; ++x) labels[grid.flat_index(Idx3(x, y, 0))] = ground_label;

  for (std::size_t oi = 0; oi < objects.size(); ++oi) {
    const SceneObject& o = objects[oi];
    // index-space bounding box of the object
    const double reach = o.kind == ObjectKind::cylinder
                             ? o.size[0]
                             : 0.5 * std::hypot(o.size[0], o.size[1]);
    const Vec3 lo_w(o.center[0] - reach, o.center[1] - reach, o.center[2]);
    const Vec3 hi_w(o.center[0] + reach, o.center[1] + reach, o.center[2] + o.size[2]);
    Idx3 lo, hi;
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::max(0, int(std::floor((lo_w[k] - grid.min_corner[k]) / grid.voxel_size - 0.5)));
      hi[k] = std::min(grid.dims[k] - 1,
                       int(std::ceil((hi_w[k] - grid.min_corner[k]) / grid.voxel_size)));
    }
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          const Idx3 idx(x, y, z);
          if (contains(o, voxel_center(grid, idx))) {
            labels[grid.flat_index(idx)] = o.label;  // later objects overwrite
            object_ids[grid.flat_index(idx)] = std::uint16_t(oi + 1);
          }
        }
  }
}

namespace {

bool is_surface(const std::vector<std::uint16_t>& labels, const GridSpec& grid, const Idx3& idx) {
  static const Idx3 nbrs[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (const auto& n : nbrs) {
    const Idx3 j = idx + n;
    bool inside = true;
    for (int k = 0; k < 3; ++k) inside = inside && j[k] >= 0 && j[k] < grid.dims[k];
    if (!inside) return true;  // grid boundary counts as exposed
    if (labels[grid.flat_index(j)] == 0) return true;
  }
  return false;
}

SensorModel make_ring_camera(const SceneSpec& spec, std::size_t index) {
  const Vec3 lo = spec.grid.min_corner, hi = spec.grid.max_corner();
  const Vec3 center(0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]),
                    spec.grid.min_corner[2] + spec.camera_height);
  const double yaw = 2.0 * M_PI * double(index) / double(spec.camera_count);
  const Vec3 fwd(std::cos(yaw), std::sin(yaw), 0);
  const Vec3 down(0, 0, -1);
  const Vec3 right = down.cross(fwd);
  Mat3 r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = fwd;

  SensorModel cam;
  cam.kind = SensorModel::Kind::camera;
  const double f = 0.5 * spec.image_width / std::tan(0.5 * spec.camera_fov_deg * M_PI / 180.0);
  cam.intrinsics << f, 0, spec.image_width / 2.0, 0, f, spec.image_height / 2.0, 0, 0, 1;
  cam.extrinsics = Mat4::Identity();
  cam.extrinsics.topLeftCorner<3, 3>() = r;
  cam.extrinsics.topRightCorner<3, 1>() = -r * center;
  cam.width = spec.image_width;
  cam.height = spec.image_height;
  return cam;
}

SensorModel make_bev_sensor(const SceneSpec& spec) {
  SensorModel bev;
  bev.kind = SensorModel::Kind::bev;
  bev.bev_min = Eigen::Vector2d(spec.grid.min_corner[0], spec.grid.min_corner[1]);
  const Vec3 hi = spec.grid.max_corner();
  bev.bev_max = Eigen::Vector2d(hi[0], hi[1]);
  bev.width = spec.grid.dims[0];
  bev.height = spec.grid.dims[1];
  return bev;
}

void apply_noise_and_pool(std::vector<Tensor>& levels, std::size_t num_levels, double sigma,
                          Rng& rng) {
  while (levels.size() < num_levels) levels.push_back(avg_pool2x2(levels.back()));
  if (sigma > 0.0) {
    for (auto& level : levels) {
      for (auto& v : level.values()) v += real(rng.normal() * sigma);
    }
  }
}

void apply_dropout(Tensor& level0, double prob, Rng& rng) {
  if (prob <= 0.0) return;
  const std::size_t c = level0.dim(0), hw = level0.dim(1) * level0.dim(2);
  for (std::size_t i = 0; i < hw; ++i) {
    if (rng.uniform() < prob) {
      for (std::size_t ch = 0; ch < c; ++ch) level0.values()[ch * hw + i] = 0;
    }
  }
}

}  // namespace

Tensor avg_pool2x2(const Tensor& level) {
  const std::size_t c = level.dim(0), h = level.dim(1), w = level.dim(2);
  const std::size_t h2 = (h + 1) / 2, w2 = (w + 1) / 2;
  Tensor out = Tensor::zeros({c, h2, w2});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h2; ++y) {
      for (std::size_t x = 0; x < w2; ++x) {
        real acc = 0;
        int taps = 0;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t sy = 2 * y + dy, sx = 2 * x + dx;
            if (sy < h && sx < w) {
              acc += level.values()[(ch * h + sy) * w + sx];
              ++taps;
            }
          }
        }
        out.values()[(ch * h2 + y) * w2 + x] = acc / real(taps);
      }
    }
  }
  return out;
}

FeaturePyramid render_camera_features(const SemanticGrid& gt, const SensorModel& camera,
                                      const SceneSpec& spec, Rng& rng,
                                      std::vector<std::uint16_t>* pixel_classes) {
  const GridSpec& grid = gt.spec;
  const std::size_t cf = spec.feature_channels;
  const int w = camera.width, h = camera.height;
  std::vector<double> zbuf(std::size_t(w) * h, std::numeric_limits<double>::infinity());
  std::vector<std::uint16_t> cls(std::size_t(w) * h, 0);

  const Mat3 rot = camera.extrinsics.topLeftCorner<3, 3>();
  const Vec3 trans = camera.extrinsics.topRightCorner<3, 1>();
  for (int z = 0; z < grid.dims[2]; ++z) {
    for (int y = 0; y < grid.dims[1]; ++y) {
      for (int x = 0; x < grid.dims[0]; ++x) {
        const std::uint16_t label = gt.labels[grid.flat_index(Idx3(x, y, z))];
        if (label == 0) continue;
        const Vec3 center = voxel_center(grid, Idx3(x, y, z));
        const double depth = (rot * center + trans)[2];
        if (depth <= kCameraNearPlane) continue;
        // pixel footprint from the eight cube corners
        double px_lo = 1e30, px_hi = -1e30, py_lo = 1e30, py_hi = -1e30;
        int seen = 0;
        for (int corner = 0; corner < 8; ++corner) {
          const Vec3 offs(0.5 * grid.voxel_size * (corner & 1 ? 1 : -1),
                          0.5 * grid.voxel_size * (corner & 2 ? 1 : -1),
                          0.5 * grid.voxel_size * (corner & 4 ? 1 : -1));
          const Vec3 xs = rot * (center + offs) + trans;
          if (xs[2] <= kCameraNearPlane) continue;
          const Vec3 pix = camera.intrinsics * (xs / xs[2]);
          px_lo = std::min(px_lo, pix[0]);
          px_hi = std::max(px_hi, pix[0]);
          py_lo = std::min(py_lo, pix[1]);
          py_hi = std::max(py_hi, pix[1]);
          ++seen;
        }
        if (seen == 0) continue;
        const int x0 = std::max(0, int(std::floor(px_lo)));
        const int x1 = std::min(w - 1, int(std::floor(px_hi)));
        const int y0 = std::max(0, int(std::floor(py_lo)));
        const int y1 = std::min(h - 1, int(std::floor(py_hi)));
        for (int py = y0; py <= y1; ++py) {
          for (int px = x0; px <= x1; ++px) {
            const std::size_t pi = std::size_t(py) * w + px;
            if (depth < zbuf[pi]) {
              zbuf[pi] = depth;
              cls[pi] = label;
            }
          }
        }
      }
    }
  }

  const auto codes = class_codes(spec.num_classes, cf - 2, spec.class_code_seed);
  Tensor level0 = Tensor::zeros({cf, std::size_t(h), std::size_t(w)});
  for (std::size_t pi = 0; pi < zbuf.size(); ++pi) {
    if (cls[pi] == 0) continue;
    for (std::size_t ch = 0; ch < cf - 2; ++ch) {
      level0.values()[ch * zbuf.size() + pi] = codes[cls[pi]][ch];
    }
    level0.values()[(cf - 2) * zbuf.size() + pi] = real(1.0 / zbuf[pi]);
  }
  if (pixel_classes) *pixel_classes = cls;

  auto it = spec.dropout.find("camera");
  apply_dropout(level0, it == spec.dropout.end() ? 0.0 : it->second, rng);

  FeaturePyramid pyr;
  pyr.sensor = camera;
  pyr.levels = {level0};
  apply_noise_and_pool(pyr.levels, spec.num_levels, spec.noise_sigma, rng);
  return pyr;
}

FeaturePyramid render_bev_features(const SemanticGrid& gt, Modality kind, const SceneSpec& spec,
                                   Rng& rng,
                                   const std::vector<std::pair<Idx3, double>>* dynamic_cells) {
  require(kind == Modality::lidar_bev || kind == Modality::radar_bev,
          "render_bev_features expects a bev modality");
  const GridSpec& grid = gt.spec;
  const std::size_t cf = spec.feature_channels;
  const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];

  std::vector<double> velocity(std::size_t(nx) * ny, 0.0);
  if (dynamic_cells) {
    for (const auto& [cell, vel] : *dynamic_cells) {
      velocity[std::size_t(cell[1]) * nx + cell[0]] = vel;
    }
  }

  const auto codes = class_codes(spec.num_classes, cf - 2, spec.class_code_seed);
  Tensor level0 = Tensor::zeros({cf, std::size_t(ny), std::size_t(nx)});
  const std::size_t hw = std::size_t(nx) * ny;
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) {
      std::uint16_t top = 0;
      int top_z = -1;
      for (int z = nz - 1; z >= 0; --z) {
        const std::uint16_t l = gt.labels[grid.flat_index(Idx3(x, y, z))];
        if (l != 0) {
          top = l;
          top_z = z;
          break;
        }
      }
      if (top == 0) continue;
      if (kind == Modality::radar_bev && rng.uniform() >= spec.radar_keep_prob) continue;
      const std::size_t pi = std::size_t(y) * nx + x;
      for (std::size_t ch = 0; ch < cf - 2; ++ch) level0.values()[ch * hw + pi] = codes[top][ch];
      level0.values()[(cf - 2) * hw + pi] = real((top_z + 0.5) * grid.voxel_size);
      if (kind == Modality::radar_bev) {
        level0.values()[(cf - 1) * hw + pi] = real(velocity[pi]);
      }
    }
  }

  auto it = spec.dropout.find(modality_name(kind));
  apply_dropout(level0, it == spec.dropout.end() ? 0.0 : it->second, rng);

  FeaturePyramid pyr;
  pyr.sensor = make_bev_sensor(spec);
  pyr.levels = {level0};
  apply_noise_and_pool(pyr.levels, spec.num_levels, spec.noise_sigma, rng);
  return pyr;
}

SceneSpec occlusion_preset(SceneSpec spec) {
  spec.occlusion_layout = true;
  return spec;
}

std::vector<SceneObject> place_objects(const SceneSpec& spec, Rng& rng) {
  const Vec3 lo = spec.grid.min_corner, hi = spec.grid.max_corner();
  const double zbase = lo[2] + spec.grid.voxel_size;  // on top of the ground layer
  const double cx = 0.5 * (lo[0] + hi[0]), cy = 0.5 * (lo[1] + hi[1]);
  const double rx = 0.5 * (hi[0] - lo[0]), ry = 0.5 * (hi[1] - lo[1]);

  std::vector<SceneObject> objects;

  if (spec.occlusion_layout) {
    // wall between the camera ring center and a box, box fully hidden
    const double bearing = rng.uniform(0, 2 * M_PI);
    const double rmin = std::min(rx, ry);
    const double r_wall = rng.uniform(0.30, 0.40) * rmin;
    const double r_box = rng.uniform(0.60, 0.75) * rmin;
    SceneObject box;
    box.kind = ObjectKind::box;
    box.label = 3;
    box.dynamic = true;
    box.size = Vec3(rng.uniform(1.0, 2.0), rng.uniform(1.0, 2.0), rng.uniform(1.0, 1.5));
    box.center = Vec3(cx + r_box * std::cos(bearing), cy + r_box * std::sin(bearing), zbase);
    box.yaw = 0;
    box.radial_velocity = rng.uniform(2.0, 8.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);

    SceneObject wall;
    wall.kind = ObjectKind::wall;
    wall.label = 2;
    // wide enough that every center-ray to the box passes through it
    const double box_reach = 0.5 * std::hypot(box.size[0], box.size[1]) + spec.grid.voxel_size;
    const double angular = std::atan2(box_reach, r_box);
    const double half_width = r_wall * std::tan(angular) + 2.5 * spec.grid.voxel_size;
    wall.size = Vec3(2.0 * half_width, 1.2, (hi[2] - lo[2]));  // full height
    wall.center = Vec3(cx + r_wall * std::cos(bearing), cy + r_wall * std::sin(bearing), lo[2]);
    wall.yaw = bearing + M_PI / 2;  // perpendicular to the bearing

    SceneObject side;  // an unoccluded cylinder a quarter turn away
    side.kind = ObjectKind::cylinder;
    side.label = 4;
    side.size = Vec3(1.0, 1.0, 2.0);
    const double sb = bearing + M_PI / 2;
    side.center = Vec3(cx + 0.5 * rmin * std::cos(sb), cy + 0.5 * rmin * std::sin(sb), zbase);

    objects = {wall, box, side};
    return objects;
  }

  if (spec.kinds.empty() || spec.max_objects == 0) return objects;
  double total_weight = 0;
  for (const auto& k : spec.kinds) total_weight += k.weight;
  require(total_weight > 0, "no object kind has positive weight");
  const std::size_t count =
      spec.min_objects + rng.next_below(spec.max_objects - spec.min_objects + 1);
  for (std::size_t i = 0; i < count; ++i) {
    double pick = rng.uniform(0, total_weight);
    const KindSpec* kind = &spec.kinds.back();
    for (const auto& k : spec.kinds) {
      if (pick < k.weight) {
        kind = &k;
        break;
      }
      pick -= k.weight;
    }
    SceneObject o;
    o.kind = kind->kind;
    o.label = kind->label;
    o.dynamic = kind->dynamic;
    for (int k = 0; k < 3; ++k) o.size[k] = rng.uniform(kind->size_min[k], kind->size_max[k]);
    o.center = Vec3(rng.uniform(lo[0] + 0.1 * rx, hi[0] - 0.1 * rx),
                    rng.uniform(lo[1] + 0.1 * ry, hi[1] - 0.1 * ry), zbase);
    o.yaw = rng.uniform(0, 2 * M_PI);
    if (o.dynamic) {
      o.radial_velocity = rng.uniform(2.0, 8.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    }
    objects.push_back(o);
  }
  return objects;
}

SceneBundle gen_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(splitmix64(spec.seed ^ 0x5ce9e5eedull));

  SceneBundle bundle;
  bundle.seed = spec.seed;
  bundle.gt.spec = spec.grid;
  bundle.gt.num_classes = spec.num_classes;

  const auto objects = place_objects(spec, rng);
  std::vector<std::uint16_t> object_ids;
  rasterize_objects(objects, spec.grid, spec.ground_label, bundle.gt.labels, object_ids);

  // surface points with class tags
  std::vector<Idx3> surface;
  for (int z = 0; z < spec.grid.dims[2]; ++z)
    for (int y = 0; y < spec.grid.dims[1]; ++y)
      for (int x = 0; x < spec.grid.dims[0]; ++x) {
        const Idx3 idx(x, y, z);
        if (bundle.gt.labels[spec.grid.flat_index(idx)] != 0 &&
            is_surface(bundle.gt.labels, spec.grid, idx)) {
          surface.push_back(idx);
        }
      }
  require(!surface.empty(), "scene has no occupied voxels");
  bundle.points.reserve(spec.point_count);
  for (std::size_t i = 0; i < spec.point_count; ++i) {
    const Idx3 idx = surface[rng.next_below(surface.size())];
    const Vec3 base = spec.grid.min_corner + spec.grid.voxel_size * idx.cast<double>();
    Vec3 p;
    for (int k = 0; k < 3; ++k) {
      p[k] = base[k] + spec.grid.voxel_size * rng.uniform(0.05, 0.95);
    }
    bundle.points.push_back(p);
    bundle.point_classes.push_back(bundle.gt.labels[spec.grid.flat_index(idx)]);
  }

  // dynamic columns for the radar velocity channel: top voxel owned by a
  // dynamic object
  std::vector<std::pair<Idx3, double>> dynamic_cells;
  for (int y = 0; y < spec.grid.dims[1]; ++y)
    for (int x = 0; x < spec.grid.dims[0]; ++x) {
      for (int z = spec.grid.dims[2] - 1; z >= 0; --z) {
        const std::size_t vi = spec.grid.flat_index(Idx3(x, y, z));
        if (bundle.gt.labels[vi] == 0) continue;
        const std::uint16_t oid = object_ids[vi];
        if (oid != 0 && objects[oid - 1].dynamic) {
          dynamic_cells.emplace_back(Idx3(x, y, 0), objects[oid - 1].radial_velocity);
        }
        break;
      }
    }

  for (std::size_t i = 0; i < spec.camera_count; ++i) {
    bundle.rig.push_back(make_ring_camera(spec, i));
  }
  for (const auto& cam : bundle.rig) {
    bundle.pyramids[Modality::camera].push_back(render_camera_features(bundle.gt, cam, spec, rng));
  }
  bundle.pyramids[Modality::lidar_bev] = {
      render_bev_features(bundle.gt, Modality::lidar_bev, spec, rng)};
  bundle.pyramids[Modality::radar_bev] = {
      render_bev_features(bundle.gt, Modality::radar_bev, spec, rng, &dynamic_cells)};
  return bundle;
}

void save_bundle(const std::string& dir, const SceneBundle& bundle, const SceneSpec& spec) {
  fs::create_directories(dir);
  save_grid(dir + "/gt.gvox", bundle.gt, GridPayload::labels);
  save_points(dir + "/points.gpts", bundle.points, bundle.point_classes);

  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["seed"] = bundle.seed;
  manifest["grid"] = {{"min_corner", {bundle.gt.spec.min_corner[0], bundle.gt.spec.min_corner[1],
                                      bundle.gt.spec.min_corner[2]}},
                      {"voxel_size", bundle.gt.spec.voxel_size},
                      {"dims", {bundle.gt.spec.dims[0], bundle.gt.spec.dims[1],
                                bundle.gt.spec.dims[2]}}};
  manifest["num_classes"] = spec.num_classes;
  manifest["feature_channels"] = spec.feature_channels;
  manifest["levels"] = spec.num_levels;
  manifest["gt_file"] = "gt.gvox";
  manifest["points_file"] = "points.gpts";

  nlohmann::json sensors = nlohmann::json::array();
  for (const auto& [modality, pyramids] : bundle.pyramids) {
    for (std::size_t si = 0; si < pyramids.size(); ++si) {
      const auto& pyr = pyramids[si];
      nlohmann::json s;
      s["modality"] = modality_name(modality);
      const std::string stem = std::string(modality_name(modality)) + "_" + std::to_string(si);
      if (pyr.sensor.kind == SensorModel::Kind::camera) {
        s["kind"] = "camera";
        std::vector<double> intr(9), extr(16);
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) intr[r * 3 + c] = pyr.sensor.intrinsics(r, c);
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) extr[r * 4 + c] = pyr.sensor.extrinsics(r, c);
        s["intrinsics"] = intr;
        s["extrinsics"] = extr;
      } else {
        s["kind"] = "bev";
        s["bev_min"] = {pyr.sensor.bev_min[0], pyr.sensor.bev_min[1]};
        s["bev_max"] = {pyr.sensor.bev_max[0], pyr.sensor.bev_max[1]};
      }
      s["width"] = pyr.sensor.width;
      s["height"] = pyr.sensor.height;
      nlohmann::json files = nlohmann::json::array();
      for (std::size_t l = 0; l < pyr.levels.size(); ++l) {
        const std::string file = stem + "_l" + std::to_string(l) + ".bin";
        save_feature_blob(dir + "/" + file, pyr.levels[l]);
        files.push_back(file);
      }
      s["levels"] = files;
      sensors.push_back(std::move(s));
    }
  }
  manifest["sensors"] = std::move(sensors);
  write_text_file(dir + "/manifest.json", manifest.dump(2));
}

SceneBundle load_bundle(const std::string& dir) {
  const auto manifest = nlohmann::json::parse(read_text_file(dir + "/manifest.json"));
  SceneBundle bundle;
  bundle.seed = manifest.at("seed").get<std::uint64_t>();
  bundle.gt = load_grid(dir + "/" + manifest.at("gt_file").get<std::string>());
  bundle.gt.num_classes = manifest.at("num_classes").get<std::size_t>();
  load_points(dir + "/" + manifest.at("points_file").get<std::string>(), bundle.points,
              bundle.point_classes);

  const std::size_t cf = manifest.at("feature_channels").get<std::size_t>();
  for (const auto& s : manifest.at("sensors")) {
    const auto modality = modality_from_name(s.at("modality").get<std::string>());
    require(modality.has_value(), "bundle manifest: unknown modality");
    FeaturePyramid pyr;
    pyr.sensor.width = s.at("width").get<int>();
    pyr.sensor.height = s.at("height").get<int>();
    if (s.at("kind").get<std::string>() == "camera") {
      pyr.sensor.kind = SensorModel::Kind::camera;
      const auto intr = s.at("intrinsics").get<std::vector<double>>();
      const auto extr = s.at("extrinsics").get<std::vector<double>>();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) pyr.sensor.intrinsics(r, c) = intr[r * 3 + c];
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) pyr.sensor.extrinsics(r, c) = extr[r * 4 + c];
    } else {
      pyr.sensor.kind = SensorModel::Kind::bev;
      pyr.sensor.bev_min[0] = s.at("bev_min").at(0).get<double>();
      pyr.sensor.bev_min[1] = s.at("bev_min").at(1).get<double>();
      pyr.sensor.bev_max[0] = s.at("bev_max").at(0).get<double>();
      pyr.sensor.bev_max[1] = s.at("bev_max").at(1).get<double>();
    }
    std::size_t h = pyr.sensor.height, w = pyr.sensor.width;
    for (const auto& file : s.at("levels")) {
      pyr.levels.push_back(load_feature_blob(dir + "/" + file.get<std::string>(), cf, h, w));
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    if (pyr.sensor.kind == SensorModel::Kind::camera) bundle.rig.push_back(pyr.sensor);
    bundle.pyramids[*modality].push_back(std::move(pyr));
  }
  return bundle;
}

std::string scene_spec_to_json(const SceneSpec& spec) {
  nlohmann::json j;
  j["seed"] = spec.seed;
  j["grid"] = {{"min_corner", {spec.grid.min_corner[0], spec.grid.min_corner[1],
                               spec.grid.min_corner[2]}},
               {"voxel_size", spec.grid.voxel_size},
               {"dims", {spec.grid.dims[0], spec.grid.dims[1], spec.grid.dims[2]}}};
  j["objects"] = {{"min", spec.min_objects}, {"max", spec.max_objects}};
  nlohmann::json kinds = nlohmann::json::array();
  for (const auto& k : spec.kinds) {
    nlohmann::json e;
    e["kind"] = k.kind == ObjectKind::box ? "box" : (k.kind == ObjectKind::wall ? "wall" : "cylinder");
    e["label"] = k.label;
    e["weight"] = k.weight;
    e["size_min"] = {k.size_min[0], k.size_min[1], k.size_min[2]};
    e["size_max"] = {k.size_max[0], k.size_max[1], k.size_max[2]};
    e["dynamic"] = k.dynamic;
    kinds.push_back(std::move(e));
  }
  j["kinds"] = std::move(kinds);
  j["ground_label"] = spec.ground_label;
  j["cameras"] = {{"count", spec.camera_count},
                  {"height", spec.camera_height},
                  {"fov_deg", spec.camera_fov_deg},
                  {"image_width", spec.image_width},
                  {"image_height", spec.image_height}};
  j["levels"] = spec.num_levels;
  j["feature_channels"] = spec.feature_channels;
  j["num_classes"] = spec.num_classes;
  j["points"] = spec.point_count;
  j["noise_sigma"] = spec.noise_sigma;
  j["dropout"] = spec.dropout;
  j["radar_keep_prob"] = spec.radar_keep_prob;
  j["occlusion_layout"] = spec.occlusion_layout;
  j["class_code_seed"] = spec.class_code_seed;
  return j.dump(2);
}

SceneSpec scene_spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    fail(std::string("scene spec: invalid JSON: ") + e.what());
  }
  reject_unknown_keys(j, {"seed", "grid", "objects", "kinds", "ground_label", "cameras", "levels",
                          "feature_channels", "num_classes", "points", "noise_sigma", "dropout",
                          "radar_keep_prob", "occlusion_layout", "class_code_seed"},
                      "scene spec");
  SceneSpec spec = default_scene_spec();
  spec.seed = json_get_or<std::uint64_t>(j, "seed", spec.seed);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    reject_unknown_keys(g, {"min_corner", "voxel_size", "dims"}, "scene spec grid");
    for (int k = 0; k < 3; ++k) {
      spec.grid.min_corner[k] = g.at("min_corner").at(k).get<double>();
      spec.grid.dims[k] = g.at("dims").at(k).get<int>();
    }
    spec.grid.voxel_size = g.at("voxel_size").get<double>();
  }
  if (j.contains("objects")) {
    reject_unknown_keys(j.at("objects"), {"min", "max"}, "scene spec objects");
    spec.min_objects = json_get_or<std::size_t>(j.at("objects"), "min", spec.min_objects);
    spec.max_objects = json_get_or<std::size_t>(j.at("objects"), "max", spec.max_objects);
  }
  if (j.contains("kinds")) {
    spec.kinds.clear();
    for (const auto& e : j.at("kinds")) {
      reject_unknown_keys(e, {"kind", "label", "weight", "size_min", "size_max", "dynamic"},
                          "scene spec kind");
      KindSpec k;
      const std::string kind = e.at("kind").get<std::string>();
      if (kind == "box") {
        k.kind = ObjectKind::box;
      } else if (kind == "wall") {
        k.kind = ObjectKind::wall;
      } else if (kind == "cylinder") {
        k.kind = ObjectKind::cylinder;
      } else {
        fail("scene spec kind: unknown kind \"" + kind + "\"");
      }
      k.label = e.at("label").get<std::uint16_t>();
      k.weight = json_get_or<double>(e, "weight", 1.0);
      if (e.contains("size_min")) {
        for (int i = 0; i < 3; ++i) k.size_min[i] = e.at("size_min").at(i).get<double>();
      }
      if (e.contains("size_max")) {
        for (int i = 0; i < 3; ++i) k.size_max[i] = e.at("size_max").at(i).get<double>();
      }
      k.dynamic = json_get_or<bool>(e, "dynamic", false);
      spec.kinds.push_back(k);
    }
  }
  spec.ground_label = json_get_or<std::uint16_t>(j, "ground_label", spec.ground_label);
  if (j.contains("cameras")) {
    const auto& c = j.at("cameras");
    reject_unknown_keys(c, {"count", "height", "fov_deg", "image_width", "image_height"},
                        "scene spec cameras");
    spec.camera_count = json_get_or<std::size_t>(c, "count", spec.camera_count);
    spec.camera_height = json_get_or<double>(c, "height", spec.camera_height);
    spec.camera_fov_deg = json_get_or<double>(c, "fov_deg", spec.camera_fov_deg);
    spec.image_width = json_get_or<int>(c, "image_width", spec.image_width);
    spec.image_height = json_get_or<int>(c, "image_height", spec.image_height);
  }
  spec.num_levels = json_get_or<std::size_t>(j, "levels", spec.num_levels);
  spec.feature_channels = json_get_or<std::size_t>(j, "feature_channels", spec.feature_channels);
  spec.num_classes = json_get_or<std::size_t>(j, "num_classes", spec.num_classes);
  spec.point_count = json_get_or<std::size_t>(j, "points", spec.point_count);
  spec.noise_sigma = json_get_or<double>(j, "noise_sigma", spec.noise_sigma);
  if (j.contains("dropout")) {
    spec.dropout = j.at("dropout").get<std::map<std::string, double>>();
  }
  spec.radar_keep_prob = json_get_or<double>(j, "radar_keep_prob", spec.radar_keep_prob);
  spec.occlusion_layout = json_get_or<bool>(j, "occlusion_layout", spec.occlusion_layout);
  spec.class_code_seed = json_get_or<std::uint64_t>(j, "class_code_seed", spec.class_code_seed);
  spec.validate();
  return spec;
}

}  // namespace gocc
