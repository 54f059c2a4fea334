#pragma once

#include <map>

#include "gocc/encoder.hpp"
#include "gocc/fusion.hpp"
#include "gocc/splat.hpp"

namespace gocc {

struct RefineParams {
  Mlp refine_mlp;             // D -> 11 + C: mean offset, scale, rotation, opacity, logits
  double offset_range = 2.0;  // meters; mean update bounded by tanh * range
  double scale_min = 0.05, scale_max = 20.0;
};

RefineParams make_refine_params(std::size_t d, std::size_t num_classes, Rng& rng,
                                double offset_range = 2.0, double scale_min = 0.05,
                                double scale_max = 20.0);

enum class InitStrategy { random, learnable, points };

const char* init_strategy_name(InitStrategy s);
std::optional<InitStrategy> init_strategy_from_name(const std::string& name);

struct PipelineConfig {
  std::size_t blocks = 4;            // B
  std::size_t gaussian_count = 6400; // P
  std::size_t channel_width = 128;   // D
  std::size_t num_classes = 17;      // C, includes the empty class at 0
  std::size_t feature_channels = 32; // Cf of the synthetic pyramids
  std::size_t num_ref_points = 4;    // N_R
  std::size_t samples_per_point = 4; // S_p
  std::size_t num_levels = 2;        // M
  std::vector<Modality> modalities = {Modality::camera};
  InitStrategy init = InitStrategy::random;
  std::uint64_t seed = 0;
  double offset_range = 2.0;
  double scale_min = 0.05, scale_max = 20.0;
  double fusion_voxel_size = 2.0;

  void validate() const;
};

// Pipeline-facing gaussian state: tensor-per-field so gradients flow across
// blocks. opacities is (P,1).
struct GaussianTensors {
  Tensor means, scales, rotations, opacities, logits, queries;

  std::size_t count() const { return means.dim(0); }
  std::size_t classes() const { return logits.dim(1); }
  std::vector<SemanticGaussian> snapshot() const;  // value copy, quats normalized
  GaussianSet to_set() const;
};

// Raw-parameterized initial gaussians. Raw fields map through the refine
// activations (softplus/clamp, normalize, sigmoid) so learnable-init leaves
// stay inside their domains under optimization.
struct GaussianInit {
  InitStrategy strategy = InitStrategy::random;
  Tensor raw_means, raw_scales, raw_rotations, raw_opacities, raw_logits;
  Tensor queries;
};

// points required for points-init; fewer points than P samples with
// replacement, exactly P keeps the given order.
GaussianInit init_gaussians(const PipelineConfig& cfg, const GridSpec& spec,
                            const std::vector<Vec3>* points, Rng& rng);

GaussianTensors materialize_init(Tape& tape, const GaussianInit& init, double scale_min,
                                 double scale_max);

GaussianTensors refine_step(Tape& tape, const GaussianTensors& g, const Tensor& unified,
                            const RefineParams& params);

struct BlockParams {
  std::vector<std::pair<Modality, EncoderParams>> encoders;
  FusionParams fusion;
  RefineParams refine;
};

struct Model {
  PipelineConfig cfg;
  GridSpec grid;
  SplatConfig splat;
  std::vector<BlockParams> blocks;
  GaussianInit init;
  ParamStore params;  // every named trainable tensor

  EncoderParams& encoder_for(std::size_t block, Modality m);
};

Model make_model(const PipelineConfig& cfg, const GridSpec& grid, const SplatConfig& splat,
                 const std::vector<Vec3>* init_points = nullptr);

using ModalityInputs = std::map<Modality, std::vector<FeaturePyramid>>;

struct BlockOutput {
  GaussianTensors gaussians;
  Tensor query_input;  // the query tensor this block consumed
  SplatTensors grid;
};

// encode -> fuse -> refine -> splat, B times; outputs every intermediate so
// per-block losses can supervise each iteration.
std::vector<BlockOutput> run_pipeline(Tape& tape, Model& model, const ModalityInputs& inputs);

}  // namespace gocc
