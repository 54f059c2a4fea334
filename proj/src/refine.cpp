#include "gocc/refine.hpp"

#include <cmath>

namespace gocc {

RefineParams make_refine_params(std::size_t d, std::size_t num_classes, Rng& rng,
                                double offset_range, double scale_min, double scale_max) {
  RefineParams p;
  p.refine_mlp = make_mlp({d, d, 11 + num_classes}, rng);
  p.offset_range = offset_range;
  p.scale_min = scale_min;
  p.scale_max = scale_max;
  return p;
}

const char* init_strategy_name(InitStrategy s) {
  switch (s) {
    case InitStrategy::random: return "random";
    case InitStrategy::learnable: return "learnable";
    case InitStrategy::points: return "points";
  }
  return "?";
}

std::optional<InitStrategy> init_strategy_from_name(const std::string& name) {
  if (name == "random") return InitStrategy::random;
  if (name == "learnable") return InitStrategy::learnable;
  if (name == "points") return InitStrategy::points;
  return std::nullopt;
}

void PipelineConfig::validate() const {
  require(blocks >= 1, "pipeline needs at least one block");
  require(gaussian_count >= 1, "pipeline needs at least one gaussian");
  require(channel_width >= 1, "channel width must be positive");
  require(num_classes >= 2, "need at least empty + one semantic class");
  require(!modalities.empty(), "modalities must be non-empty");
  for (std::size_t i = 0; i < modalities.size(); ++i)
    for (std::size_t j = i + 1; j < modalities.size(); ++j)
      require(modalities[i] != modalities[j], "duplicate modality in config");
  require(scale_min > 0.0 && scale_min < scale_max, "need 0 < scale_min < scale_max");
}

std::vector<SemanticGaussian> GaussianTensors::snapshot() const {
  const std::size_t p = count(), c = classes();
  std::vector<SemanticGaussian> out(p);
  for (std::size_t i = 0; i < p; ++i) {
    auto& g = out[i];
    for (int k = 0; k < 3; ++k) {
      g.mean[k] = double(means.values()[i * 3 + k]);
      g.scale[k] = double(scales.values()[i * 3 + k]);
    }
    Vec4 q;
    for (int k = 0; k < 4; ++k) q[k] = double(rotations.values()[i * 4 + k]);
    g.rotation = q / q.norm();
    g.opacity = std::min(1.0, std::max(0.0, double(opacities.values()[i])));
    g.logits.resize(c);
    for (std::size_t k = 0; k < c; ++k) g.logits[k] = double(logits.values()[i * c + k]);
  }
  return out;
}

GaussianSet GaussianTensors::to_set() const {
  GaussianSet set;
  set.gaussians = snapshot();
  set.channel_width = queries.defined() ? queries.dim(1) : 0;
  if (queries.defined()) set.queries = queries.values();
  return set;
}

namespace {

real inv_softplus(double y) {  // softplus(x) = y, y > 0
  if (y > 30.0) return real(y);
  return real(std::log(std::expm1(y)));
}

real logit(double p) { return real(std::log(p / (1.0 - p))); }

}  // namespace

GaussianInit init_gaussians(const PipelineConfig& cfg, const GridSpec& spec,
                            const std::vector<Vec3>* points, Rng& rng) {
  cfg.validate();
  spec.validate();
  const std::size_t p = cfg.gaussian_count;
  const std::size_t c = cfg.num_classes;
  const std::size_t d = cfg.channel_width;
  const bool learnable = cfg.init == InitStrategy::learnable;

  GaussianInit init;
  init.strategy = cfg.init;
  init.raw_means = Tensor::zeros({p, 3}, learnable);
  init.raw_scales = Tensor::zeros({p, 3}, learnable);
  init.raw_rotations = Tensor::zeros({p, 4}, learnable);
  init.raw_opacities = Tensor::zeros({p, 1}, learnable);
  init.raw_logits = Tensor::zeros({p, c}, learnable);
  init.queries = Tensor::zeros({p, d});

  const Vec3 lo = spec.min_corner, hi = spec.max_corner();
  for (std::size_t i = 0; i < p; ++i) {
    for (int k = 0; k < 3; ++k) {
      init.raw_means.values()[i * 3 + k] = real(rng.uniform(lo[k], hi[k]));
      init.raw_scales.values()[i * 3 + k] = inv_softplus(rng.log_uniform(0.5, 2.0));
    }
    init.raw_rotations.values()[i * 4] = real(1);  // identity
    init.raw_opacities.values()[i] = logit(0.1);
  }
  for (auto& v : init.queries.values()) v = real(rng.normal() * 0.02);

  if (cfg.init == InitStrategy::points) {
    require(points != nullptr && !points->empty(), "points-init requires a point cloud");
    const std::size_t k = points->size();
    std::vector<std::size_t> picks(p);
    if (k == p) {
      for (std::size_t i = 0; i < p; ++i) picks[i] = i;
    } else if (k < p) {
      for (std::size_t i = 0; i < p; ++i) picks[i] = rng.next_below(k);  // with replacement
    } else {
      std::vector<std::size_t> pool(k);
      for (std::size_t i = 0; i < k; ++i) pool[i] = i;
      for (std::size_t i = 0; i < p; ++i) {  // partial Fisher-Yates
        std::swap(pool[i], pool[i + rng.next_below(k - i)]);
        picks[i] = pool[i];
      }
    }
    for (std::size_t i = 0; i < p; ++i) {
      const Vec3& pt = (*points)[picks[i]];
      for (int kk = 0; kk < 3; ++kk) init.raw_means.values()[i * 3 + kk] = real(pt[kk]);
    }
  }
  return init;
}

GaussianTensors materialize_init(Tape& tape, const GaussianInit& init, double scale_min,
                                 double scale_max) {
  GaussianTensors g;
  g.means = init.raw_means;
  g.scales = ops::clamp(tape, ops::softplus(tape, init.raw_scales), real(scale_min),
                        real(scale_max));
  g.rotations = ops::normalize_rows(tape, init.raw_rotations, {1, 0, 0, 0});
  g.opacities = ops::sigmoid(tape, init.raw_opacities);
  g.logits = init.raw_logits;
  g.queries = init.queries;
  return g;
}

GaussianTensors refine_step(Tape& tape, const GaussianTensors& g, const Tensor& unified,
                            const RefineParams& params) {
  const std::size_t p = g.count();
  require(unified.rank() == 2 && unified.dim(0) == p, "refine_step: Q must be (P, D)");
  Tensor raw = mlp_forward(tape, params.refine_mlp, unified);
  const std::size_t c = raw.dim(1) - 11;
  require(c == g.classes(), "refine head class width mismatch");

  Tensor raw_m = ops::slice(tape, raw, 1, 0, 3);
  Tensor raw_s = ops::slice(tape, raw, 1, 3, 3);
  Tensor raw_r = ops::slice(tape, raw, 1, 6, 4);
  Tensor raw_a = ops::slice(tape, raw, 1, 10, 1);
  Tensor raw_c = ops::slice(tape, raw, 1, 11, c);

  GaussianTensors out;
  out.means = ops::add(tape, g.means, ops::scale(tape, ops::tanh(tape, raw_m),
                                                 real(params.offset_range)));
  out.scales = ops::clamp(tape, ops::softplus(tape, raw_s), real(params.scale_min),
                          real(params.scale_max));
  out.rotations = ops::normalize_rows(tape, raw_r, {1, 0, 0, 0});
  out.opacities = ops::sigmoid(tape, raw_a);
  out.logits = raw_c;
  out.queries = unified;
  return out;
}

EncoderParams& Model::encoder_for(std::size_t block, Modality m) {
  for (auto& [mod, enc] : blocks[block].encoders) {
    if (mod == m) return enc;
  }
  fail(std::string("no encoder for modality ") + modality_name(m));
}

Model make_model(const PipelineConfig& cfg, const GridSpec& grid, const SplatConfig& splat,
                 const std::vector<Vec3>* init_points) {
  cfg.validate();
  grid.validate();
  splat.validate();

  Model model;
  model.cfg = cfg;
  model.grid = grid;
  model.splat = splat;

  Rng rng(splitmix64(cfg.seed));
  model.init = init_gaussians(cfg, grid, init_points, rng);
  if (cfg.init == InitStrategy::learnable) {
    model.params.add("init.means", model.init.raw_means);
    model.params.add("init.scales", model.init.raw_scales);
    model.params.add("init.rotations", model.init.raw_rotations);
    model.params.add("init.opacities", model.init.raw_opacities);
    model.params.add("init.logits", model.init.raw_logits);
  }

  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    BlockParams block;
    const std::string prefix = "block" + std::to_string(b);
    for (Modality m : cfg.modalities) {
      EncoderParams enc = make_encoder_params(cfg.channel_width, cfg.feature_channels,
                                              cfg.num_ref_points, cfg.samples_per_point,
                                              cfg.num_levels, rng);
      const std::string ep = prefix + ".enc." + modality_name(m);
      model.params.add_mlp(ep + ".offset", enc.offset_mlp);
      model.params.add(ep + ".attn.w", enc.attn_weight);
      model.params.add(ep + ".attn.b", enc.attn_bias);
      model.params.add(ep + ".value", enc.value_proj);
      block.encoders.emplace_back(m, std::move(enc));
    }
    block.fusion = make_fusion_params(cfg.modalities.size(), cfg.channel_width, rng,
                                      cfg.fusion_voxel_size);
    model.params.add_mlp(prefix + ".fuse.mlp", block.fusion.fuser_mlp);
    model.params.add(prefix + ".fuse.sc_kernel", block.fusion.sc_kernel);
    model.params.add(prefix + ".fuse.sc_bias", block.fusion.sc_bias);
    block.refine = make_refine_params(cfg.channel_width, cfg.num_classes, rng, cfg.offset_range,
                                      cfg.scale_min, cfg.scale_max);
    model.params.add_mlp(prefix + ".refine.mlp", block.refine.refine_mlp);
    model.blocks.push_back(std::move(block));
  }
  return model;
}

std::vector<BlockOutput> run_pipeline(Tape& tape, Model& model, const ModalityInputs& inputs) {
  for (Modality m : model.cfg.modalities) {
    auto it = inputs.find(m);
    if (it == inputs.end() || it->second.empty()) {
      fail(std::string("missing modality input: ") + modality_name(m));
    }
  }

  GaussianTensors g = materialize_init(tape, model.init, model.cfg.scale_min, model.cfg.scale_max);
  std::vector<BlockOutput> outputs;
  outputs.reserve(model.cfg.blocks);
  for (std::size_t b = 0; b < model.cfg.blocks; ++b) {
    BlockOutput out;
    out.query_input = g.queries;
    std::vector<Tensor> feats;
    for (auto& [m, enc] : model.blocks[b].encoders) {
      feats.push_back(encode_modality(tape, g.means, g.scales, g.rotations, g.queries,
                                      inputs.at(m), enc));
    }
    Tensor q = fuse(tape, feats, g.means.values(), model.blocks[b].fusion);
    out.gaussians = refine_step(tape, g, q, model.blocks[b].refine);
    out.grid = splat_op(tape, out.gaussians.means, out.gaussians.scales, out.gaussians.rotations,
                        out.gaussians.opacities, out.gaussians.logits, model.grid, model.splat);
    g = out.gaussians;
    outputs.push_back(std::move(out));
  }
  return outputs;
}

}  // namespace gocc
