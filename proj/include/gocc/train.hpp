#pragma once

#include <functional>
#include <ostream>

#include "gocc/config.hpp"
#include "gocc/losses.hpp"
#include "gocc/optim.hpp"
#include "gocc/scene.hpp"

namespace gocc {

// Labels from splatted tensor fields (threshold + argmax rule).
std::vector<std::uint16_t> labels_from_tensors(const Tensor& occupancy, const Tensor& class_probs,
                                               const SplatConfig& cfg);

struct FitResult {
  GaussianSet fitted;
  SemanticGrid grid;           // semantic splat of the fitted set
  EvalResult metrics;
  std::vector<double> loss_trace;  // loss value at every step (before the update)
};

// Direct optimization of gaussian parameters against one scene's ground
// truth: splat + losses only, no encoder/fusion. Raw leaves run through the
// refine activations so the invariants hold at every step.
FitResult direct_fit(const SceneBundle& bundle, const RunConfig& cfg,
                     const std::function<void(std::size_t, double, double)>& on_step = {});

// Forward-only loss of a gaussian tensor state against gt (the step-0 value).
double fit_loss_only(const SceneBundle& bundle, const RunConfig& cfg);

struct TrainResult {
  EvalResult initial_holdout;  // untrained model on the held-out scenes
  EvalResult final_holdout;
  std::vector<double> loss_trace;
  std::string checkpoint_path;
};

// Full-pipeline training over a scene set with a train/held-out split,
// JSON-lines logging, periodic held-out evaluation and GFWT checkpoints.
// Aborts with the last good checkpoint if the loss goes non-finite.
TrainResult train_pipeline(const std::vector<SceneBundle>& scenes, const RunConfig& cfg,
                           const std::string& out_dir, std::ostream* console = nullptr);

// Model + optimizer checkpointing (GFWT named-tensor table).
void save_model_checkpoint(const std::string& path, Model& model, AdamState* opt);
void load_model_checkpoint(const std::string& path, Model& model, AdamState* opt);

// Held-out evaluation of a model over scenes: micro-averaged counts.
EvalResult evaluate_model(Model& model, const std::vector<SceneBundle>& scenes,
                          const RunConfig& cfg);

// Pipeline inputs restricted to the configured modalities.
ModalityInputs inputs_for(const SceneBundle& bundle, const PipelineConfig& cfg);

}  // namespace gocc
