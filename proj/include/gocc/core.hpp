#pragma once

#include <optional>
#include <vector>

#include "gocc/common.hpp"

namespace gocc {

// Quaternion storage order is (w, x, y, z) everywhere: math, files, logs.

inline Vec4 quat_identity() { return Vec4(1, 0, 0, 0); }

inline Vec4 quat_mul(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

// Rotation matrix of a unit quaternion (w,x,y,z).
inline Mat3 quat_to_rotmat(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// Quaternion for a rotation of `angle` radians about a (unit) axis.
Vec4 quat_from_axis_angle(const Vec3& axis, double angle);

// dR/dq_j evaluated at a unit quaternion; j indexes (w,x,y,z).
Mat3 quat_rotmat_partial(const Vec4& q_unit, int j);

// Chains a rotation-matrix cotangent through R(q/|q|) and projects onto the
// tangent space of the unit sphere at q.
Vec4 quat_grad_project(const Vec4& q_raw, const Mat3& rot_cotangent);

// One semantic Gaussian primitive. `logits` has C entries; index 0 is the
// empty class.
struct SemanticGaussian {
  Vec3 mean = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Vec4 rotation = quat_identity();
  double opacity = 0.0;
  std::vector<double> logits;

  void validate(std::size_t num_classes) const;
};

struct GaussianSet {
  std::vector<SemanticGaussian> gaussians;
  // P x D row-major query features, carried between fusion blocks.
  std::vector<real> queries;
  std::size_t channel_width = 0;

  std::size_t size() const { return gaussians.size(); }
  void validate() const;
};

struct GridSpec {
  Vec3 min_corner = Vec3::Zero();
  double voxel_size = 1.0;
  Idx3 dims = Idx3(1, 1, 1);

  std::size_t voxel_count() const {
    return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
  }
  Vec3 max_corner() const { return min_corner + voxel_size * dims.cast<double>(); }
  // Row-major with x fastest, matching the grid file payload order.
  std::size_t flat_index(const Idx3& idx) const {
    return (std::size_t(idx[2]) * dims[1] + idx[1]) * dims[0] + idx[0];
  }
  void validate() const;
  bool operator==(const GridSpec& o) const {
    return min_corner == o.min_corner && voxel_size == o.voxel_size && dims == o.dims;
  }
};

struct SemanticGrid {
  GridSpec spec;
  std::vector<real> occupancy;              // voxel_count, in [0,1]
  std::vector<real> class_probs;            // voxel_count x C, optional (empty if absent)
  std::vector<std::uint16_t> labels;        // voxel_count
  std::size_t num_classes = 0;

  bool has_class_probs() const { return !class_probs.empty(); }
};

// Sigma = R diag(s)^2 R^T. Throws on non-positive scale; quaternions within
// 1e-6 of unit norm are normalized, anything further off is an error.
Mat3 build_covariance(const Vec3& scale, const Vec4& rotation);

// Inverse covariance R diag(1/s^2) R^T, computed analytically.
Mat3 inverse_covariance(const Vec3& scale, const Vec4& rotation);

// Unnormalized density exp(-1/2 (x-m)^T Sigma^-1 (x-m)), peak 1 at the mean.
double gaussian_weight(const Vec3& x, const SemanticGaussian& g);

Vec3 voxel_center(const GridSpec& spec, const Idx3& idx);

// floor((p - min_corner) / voxel_size) when p lies inside the half-open
// extent [min_corner, max_corner), otherwise nullopt.
std::optional<Idx3> world_to_voxel(const GridSpec& spec, const Vec3& p);

}  // namespace gocc
