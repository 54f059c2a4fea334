#pragma once

#include "gocc/core.hpp"
#include "gocc/tensor.hpp"

namespace gocc {

struct SplatConfig {
  double cutoff_sigma = 4.0;
  double occupancy_threshold = 0.5;  // tau: below it a voxel is labeled empty
  double eps = 1e-8;                 // safe-division epsilon for the semantic mixture

  void validate() const {
    require(cutoff_sigma > 0.0, "cutoff_sigma must be positive");
    require(occupancy_threshold > 0.0 && occupancy_threshold < 1.0,
            "occupancy_threshold must lie in (0,1)");
  }
};

// Inclusive index-space AABB; empty() when the Gaussian misses the grid.
struct CullBox {
  Idx3 lo = Idx3(0, 0, 0);
  Idx3 hi = Idx3(-1, -1, -1);
  bool empty() const { return lo[0] > hi[0] || lo[1] > hi[1] || lo[2] > hi[2]; }
};

struct CullList {
  std::vector<CullBox> boxes;
};

// Index-space AABB of the world ellipsoid {x : mahalanobis(x) <= cutoff},
// from per-axis extents cutoff * sqrt(Sigma_kk), clamped to the grid.
// Conservative: may overcover, never undercovers voxel centers.
CullList cull(const std::vector<SemanticGaussian>& gaussians, const GridSpec& spec,
              const SplatConfig& cfg);

// Forward splat fields plus everything backward needs.
struct SplatResult {
  std::vector<real> occupancy;     // V; alpha = 1 - prod(1 - a_i g_i)
  std::vector<real> log_transmit;  // V; sum of log(1 - w_i), so 1 - alpha = exp(L)
  std::vector<real> weight_sum;    // V (semantic runs only)
  std::vector<real> class_probs;   // V*C (semantic runs only)
  std::size_t num_classes = 0;
};

// cull_override: pass to reuse a cull list; nullptr computes one. Pass a list
// of whole-grid boxes to get dense (no-culling) evaluation.
SplatResult splat_fields(const std::vector<SemanticGaussian>& gaussians, const GridSpec& spec,
                         const SplatConfig& cfg, bool semantics,
                         const CullList* cull_override = nullptr);

std::vector<real> splat_occupancy(const std::vector<SemanticGaussian>& gaussians,
                                  const GridSpec& spec, const SplatConfig& cfg);

// Occupancy + semantic mixture + labels in one pass.
SemanticGrid splat_semantics(const std::vector<SemanticGaussian>& gaussians, const GridSpec& spec,
                             const SplatConfig& cfg);

// Labels from already-splatted fields: empty below tau, else argmax over
// classes 1..C-1, ties to the lowest class index.
std::vector<std::uint16_t> labels_from_fields(const SplatResult& fields, const SplatConfig& cfg);

struct SplatGrads {
  std::vector<double> mean;      // P*3
  std::vector<double> scale;     // P*3
  std::vector<double> rotation;  // P*4, projected onto the unit-sphere tangent
  std::vector<double> opacity;   // P
  std::vector<double> logits;    // P*C
};

// Analytic gradients of (occupancy, class_probs) wrt all five parameter
// groups. Either upstream grad may be empty. `fields` must come from a
// semantic forward when class_probs_grad is nonempty.
SplatGrads splat_backward(const std::vector<SemanticGaussian>& gaussians, const GridSpec& spec,
                          const SplatConfig& cfg, const SplatResult& fields,
                          const std::vector<real>& occupancy_grad,
                          const std::vector<real>& class_probs_grad,
                          const CullList* cull_override = nullptr);

// Tape bridge: differentiable splat over parameter tensors. Quaternion rows
// are normalized internally (|q| > 1e-8 required), so gradients are those of
// f(q/|q|).
struct SplatTensors {
  Tensor occupancy;    // (V)
  Tensor class_probs;  // (V, C)
};
SplatTensors splat_op(Tape& tape, const Tensor& means, const Tensor& scales, const Tensor& rots,
                      const Tensor& opacities, const Tensor& logits, const GridSpec& spec,
                      const SplatConfig& cfg);

}  // namespace gocc
