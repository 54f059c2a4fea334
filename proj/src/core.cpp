#include "gocc/core.hpp"

#include <cmath>
#include <sstream>

namespace gocc {

Vec4 quat_from_axis_angle(const Vec3& axis, double angle) {
  const Vec3 a = axis.normalized();
  const double h = 0.5 * angle;
  const double s = std::sin(h);
  return Vec4(std::cos(h), s * a[0], s * a[1], s * a[2]);
}

Mat3 quat_rotmat_partial(const Vec4& q, int j) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 d;
  switch (j) {
    case 0: d << 0, -z, y, z, 0, -x, -y, x, 0; break;
    case 1: d << 0, y, z, y, -2 * x, -w, z, w, -2 * x; break;
    case 2: d << -2 * y, x, w, x, 0, z, -w, z, -2 * y; break;
    default: d << -2 * z, -w, x, w, -2 * z, y, x, y, 0; break;
  }
  return 2.0 * d;
}

Vec4 quat_grad_project(const Vec4& q_raw, const Mat3& rot_cotangent) {
  const double norm = q_raw.norm();
  const Vec4 qn = q_raw / norm;
  Vec4 dq_raw;
  for (int j = 0; j < 4; ++j) {
    dq_raw[j] = (quat_rotmat_partial(qn, j).array() * rot_cotangent.array()).sum();
  }
  return (dq_raw - qn * qn.dot(dq_raw)) / norm;
}

void SemanticGaussian::validate(std::size_t num_classes) const {
  require(scale.minCoeff() > 0.0, "gaussian scale must be strictly positive");
  require(std::abs(rotation.norm() - 1.0) <= 1e-9, "gaussian rotation must be a unit quaternion");
  require(opacity >= 0.0 && opacity <= 1.0, "gaussian opacity must lie in [0,1]");
  require(logits.size() == num_classes, "gaussian logits length must equal class count");
  for (double v : logits) require(std::isfinite(v), "gaussian logits must be finite");
  for (int k = 0; k < 3; ++k) {
    require(std::isfinite(mean[k]) && std::isfinite(scale[k]), "gaussian mean/scale must be finite");
  }
}

void GaussianSet::validate() const {
  require(channel_width > 0, "gaussian set channel width must be positive");
  require(queries.size() == gaussians.size() * channel_width,
          "query row count must equal gaussian count");
}

void GridSpec::validate() const {
  require(voxel_size > 0.0, "voxel_size must be positive");
  require(dims[0] >= 1 && dims[1] >= 1 && dims[2] >= 1, "grid dims must each be >= 1");
}

static Vec4 checked_unit_quat(const Vec4& rotation) {
  const double n = rotation.norm();
  if (std::abs(n - 1.0) > 1e-6) {
    std::ostringstream os;
    os << "quaternion norm " << n << " is more than 1e-6 from unit";
    fail(os.str());
  }
  return rotation / n;
}

Mat3 build_covariance(const Vec3& scale, const Vec4& rotation) {
  require(scale.minCoeff() > 0.0, "build_covariance: scale must be strictly positive");
  const Mat3 r = quat_to_rotmat(checked_unit_quat(rotation));
  return r * scale.array().square().matrix().asDiagonal() * r.transpose();
}

Mat3 inverse_covariance(const Vec3& scale, const Vec4& rotation) {
  require(scale.minCoeff() > 0.0, "inverse_covariance: scale must be strictly positive");
  const Mat3 r = quat_to_rotmat(checked_unit_quat(rotation));
  const Vec3 inv_sq = scale.array().square().inverse().matrix();
  return r * inv_sq.asDiagonal() * r.transpose();
}

double gaussian_weight(const Vec3& x, const SemanticGaussian& g) {
  const Mat3 a = inverse_covariance(g.scale, g.rotation);
  const Vec3 d = x - g.mean;
  return std::exp(-0.5 * d.dot(a * d));
}

Vec3 voxel_center(const GridSpec& spec, const Idx3& idx) {
  for (int k = 0; k < 3; ++k) {
    if (idx[k] < 0 || idx[k] >= spec.dims[k]) {
      std::ostringstream os;
      os << "voxel index (" << idx[0] << "," << idx[1] << "," << idx[2] << ") out of range for dims ("
         << spec.dims[0] << "," << spec.dims[1] << "," << spec.dims[2] << ")";
      fail(os.str());
    }
  }
  return spec.min_corner + spec.voxel_size * (idx.cast<double>() + Vec3(0.5, 0.5, 0.5));
}

std::optional<Idx3> world_to_voxel(const GridSpec& spec, const Vec3& p) {
  Idx3 idx;
  for (int k = 0; k < 3; ++k) {
    const double t = std::floor((p[k] - spec.min_corner[k]) / spec.voxel_size);
    if (t < 0.0 || t >= double(spec.dims[k])) return std::nullopt;
    idx[k] = int(t);
  }
  return idx;
}

}  // namespace gocc
