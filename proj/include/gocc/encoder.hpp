#pragma once

#include <optional>

#include "gocc/core.hpp"
#include "gocc/nn.hpp"

namespace gocc {

enum class Modality { camera, lidar_bev, radar_bev };

const char* modality_name(Modality m);
std::optional<Modality> modality_from_name(const std::string& name);

// Pinhole camera or orthographic BEV projection model.
struct SensorModel {
  enum class Kind { camera, bev } kind = Kind::camera;

  // camera
  Mat3 intrinsics = Mat3::Identity();   // pixels
  Mat4 extrinsics = Mat4::Identity();   // world -> sensor rigid transform
  // bev
  Eigen::Vector2d bev_min = Eigen::Vector2d::Zero();
  Eigen::Vector2d bev_max = Eigen::Vector2d::Ones();

  int height = 1, width = 1;  // pixels or cells at level 0

  void validate() const;
};

constexpr double kCameraNearPlane = 0.1;  // meters

// Normalized (u,v) in [0,1]^2, or nullopt when invisible (behind the near
// plane or outside the map).
std::optional<Eigen::Vector2d> project(const SensorModel& sensor, const Vec3& p);

// One sensor's multi-scale feature maps; level l+1 halves each spatial dim.
struct FeaturePyramid {
  SensorModel sensor;
  std::vector<Tensor> levels;  // each (Cf, H_l, W_l)

  std::size_t channels() const { return levels.empty() ? 0 : levels[0].dim(0); }
  void validate() const;
};

// Weights of one modality's Gaussian encoder.
struct EncoderParams {
  Mlp offset_mlp;      // D -> 3*N_R
  Tensor attn_weight;  // (D, M*S_p*3): per-slot (du, dv, logit)
  Tensor attn_bias;    // (M*S_p*3)
  Tensor value_proj;   // (Cf, D), bias-free so invisible gaussians stay zero
  std::size_t num_ref_points = 4;     // N_R
  std::size_t samples_per_point = 4;  // S_p
  std::size_t num_levels = 2;         // M

  std::size_t channel_width() const { return attn_weight.dim(0); }
  std::size_t feature_channels() const { return value_proj.dim(0); }
  std::size_t slots() const { return num_levels * samples_per_point; }
};

EncoderParams make_encoder_params(std::size_t d, std::size_t cf, std::size_t n_ref,
                                  std::size_t samples, std::size_t levels, Rng& rng);

// Reference points m + R S o per gaussian from the offset MLP output.
// offsets: (P, 3*N_R) raw MLP output; result: (P*N_R, 3) world points.
Tensor reference_points_op(Tape& tape, const Tensor& means, const Tensor& scales,
                           const Tensor& rotations, const Tensor& offsets);

// Convenience single-gaussian wrapper matching the spec surface.
std::vector<Vec3> gen_reference_points(const SemanticGaussian& g, const std::vector<real>& query,
                                       const EncoderParams& params);

// Batched projection. uv rows for invisible points are (0.5, 0.5) and carry
// no gradient; `visible` reports the mask.
struct ProjectedPoints {
  Tensor uv;                  // (K, 2)
  std::vector<char> visible;  // K
};
ProjectedPoints project_points_op(Tape& tape, const SensorModel& sensor, const Tensor& points);

// Deformable attention for one query at one reference location.
// q: (1, D); uv in [0,1]^2 (must be visible for this sensor).
Tensor deformable_attention(Tape& tape, const Tensor& q, const Eigen::Vector2d& uv,
                            const FeaturePyramid& pyramid, const EncoderParams& params);

// Per-gaussian feature extraction over all sensors of one modality:
// sum over sensors and reference points of deformable attention at visible
// projections. Output (P, D); gaussians invisible everywhere give zero rows.
Tensor encode_modality(Tape& tape, const Tensor& means, const Tensor& scales,
                       const Tensor& rotations, const Tensor& queries,
                       const std::vector<FeaturePyramid>& sensors, const EncoderParams& params);

}  // namespace gocc
