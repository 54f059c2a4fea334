#pragma once

#include "gocc/metrics.hpp"
#include "gocc/optim.hpp"
#include "gocc/refine.hpp"

namespace gocc {

// One human-editable config file drives fit/train/eval. Unknown keys are
// rejected on load; every field has a documented default.
struct RunConfig {
  PipelineConfig pipeline;
  SplatConfig splat;
  AdamConfig optim;                  // optim.lr is the peak learning rate
  std::size_t warmup_steps = 500;
  std::size_t total_steps = 2000;
  bool decay_gaussian_params = false;  // weight decay skips gaussian leaves by default

  std::size_t eval_every = 200;
  std::size_t log_every = 1;
  double holdout_fraction = 0.125;

  MiouMode miou_mode = MiouMode::present;
  std::vector<std::string> class_names;  // filled with defaults when empty

  std::size_t fit_steps = 500;
  double fit_lr = 0.15;
  InitStrategy fit_init = InitStrategy::points;
  // direct fit starts from sub-voxel scales: large initial footprints sit in
  // a predict-nothing basin where opacity collapses before scales can shrink
  double fit_init_scale = 0.25;
  // points-init for fit balances the subsample across classes; uniform
  // sampling starves thin structures of gaussians at desk-scale counts
  bool fit_balanced_init = true;

  RunConfig() { optim.weight_decay = 0.01; }

  void validate() const;
};

RunConfig default_run_config();
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

std::vector<std::string> default_class_names(std::size_t num_classes);

}  // namespace gocc
