#include "gocc/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gocc/io.hpp"

namespace fs = std::filesystem;

namespace gocc {

std::vector<std::uint16_t> labels_from_tensors(const Tensor& occupancy, const Tensor& class_probs,
                                               const SplatConfig& cfg) {
  SplatResult fields;
  fields.occupancy = occupancy.values();
  fields.class_probs = class_probs.values();
  fields.num_classes = class_probs.dim(1);
  return labels_from_fields(fields, cfg);
}

ModalityInputs inputs_for(const SceneBundle& bundle, const PipelineConfig& cfg) {
  ModalityInputs inputs;
  for (Modality m : cfg.modalities) {
    auto it = bundle.pyramids.find(m);
    if (it == bundle.pyramids.end() || it->second.empty()) {
      fail(std::string("scene bundle lacks modality: ") + modality_name(m));
    }
    inputs[m] = it->second;
  }
  return inputs;
}

namespace {

bool all_finite(const std::vector<real>& v) {
  for (real x : v) {
    if (!std::isfinite(double(x))) return false;
  }
  return true;
}

// per-class point pool, each class contributing an equal share of means
std::vector<Vec3> balanced_points(const SceneBundle& bundle, std::size_t count, Rng& rng) {
  std::map<std::uint16_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < bundle.points.size(); ++i) {
    by_class[bundle.point_classes[i]].push_back(i);
  }
  std::vector<Vec3> out;
  out.reserve(count);
  const std::size_t n_classes = by_class.size();
  std::size_t slot = 0;
  for (const auto& [cls, pool] : by_class) {
    const std::size_t share = count / n_classes + (slot < count % n_classes ? 1 : 0);
    for (std::size_t i = 0; i < share; ++i) {
      out.push_back(bundle.points[pool[rng.next_below(pool.size())]]);
    }
    ++slot;
  }
  return out;
}

GaussianInit make_fit_init(const SceneBundle& bundle, const RunConfig& cfg) {
  PipelineConfig pc = cfg.pipeline;
  pc.init = cfg.fit_init == InitStrategy::learnable ? InitStrategy::random : cfg.fit_init;
  Rng rng(splitmix64(pc.seed ^ 0xf17f17ull));
  std::vector<Vec3> pool = bundle.points;
  if (pc.init == InitStrategy::points && cfg.fit_balanced_init && !bundle.points.empty()) {
    pool = balanced_points(bundle, pc.gaussian_count, rng);
  }
  GaussianInit init = init_gaussians(pc, bundle.gt.spec, &pool, rng);
  const real raw_scale = cfg.fit_init_scale > 30.0
                             ? real(cfg.fit_init_scale)
                             : real(std::log(std::expm1(cfg.fit_init_scale)));
  for (auto& v : init.raw_scales.values()) v = raw_scale;
  // every raw field is a trainable leaf in direct-fit mode
  init.raw_means.set_requires_grad(true);
  init.raw_scales.set_requires_grad(true);
  init.raw_rotations.set_requires_grad(true);
  init.raw_opacities.set_requires_grad(true);
  init.raw_logits.set_requires_grad(true);
  return init;
}

struct FitForward {
  Tensor loss;
  GaussianTensors state;
  SplatTensors grid;
};

FitForward fit_forward(Tape& tape, const GaussianInit& init, const SceneBundle& bundle,
                       const RunConfig& cfg) {
  FitForward out;
  out.state = materialize_init(tape, init, cfg.pipeline.scale_min, cfg.pipeline.scale_max);
  out.grid = splat_op(tape, out.state.means, out.state.scales, out.state.rotations,
                      out.state.opacities, out.state.logits, bundle.gt.spec, cfg.splat);
  auto terms = total_loss(tape, {out.grid}, bundle.gt.labels);
  out.loss = terms.total;
  return out;
}

}  // namespace

double fit_loss_only(const SceneBundle& bundle, const RunConfig& cfg) {
  GaussianInit init = make_fit_init(bundle, cfg);
  Tape tape;
  NoGradGuard ng(tape);
  return double(fit_forward(tape, init, bundle, cfg).loss.item());
}

FitResult direct_fit(const SceneBundle& bundle, const RunConfig& cfg,
                     const std::function<void(std::size_t, double, double)>& on_step) {
  require(bundle.gt.labels.size() == bundle.gt.spec.voxel_count(), "bundle gt labels missing");
  GaussianInit init = make_fit_init(bundle, cfg);
  std::vector<Tensor> params = {init.raw_means, init.raw_scales, init.raw_rotations,
                                init.raw_opacities, init.raw_logits};
  AdamConfig adam_cfg = cfg.optim;
  adam_cfg.lr = cfg.fit_lr;
  adam_cfg.weight_decay = cfg.decay_gaussian_params ? cfg.optim.weight_decay : 0.0;
  AdamState opt(params, adam_cfg);

  FitResult result;
  result.loss_trace.reserve(cfg.fit_steps);
  for (std::size_t step = 0; step < cfg.fit_steps; ++step) {
    Tape tape;
    for (auto& p : params) p.zero_grad();
    FitForward fwd = fit_forward(tape, init, bundle, cfg);
    const double loss = double(fwd.loss.item());
    if (!std::isfinite(loss)) {
      fail("direct fit diverged at step " + std::to_string(step) + " (non-finite loss)");
    }
    result.loss_trace.push_back(loss);
    const double lr = 0.5 * adam_cfg.lr * (1.0 + std::cos(M_PI * double(step) / double(cfg.fit_steps)));
    if (on_step) on_step(step, loss, lr);
    tape.backward(fwd.loss);
    opt.step(lr);
  }

  Tape tape;
  NoGradGuard ng(tape);
  GaussianTensors final_state =
      materialize_init(tape, init, cfg.pipeline.scale_min, cfg.pipeline.scale_max);
  result.fitted = final_state.to_set();
  result.grid = splat_semantics(result.fitted.gaussians, bundle.gt.spec, cfg.splat);
  result.grid.num_classes = cfg.pipeline.num_classes;
  result.metrics = evaluate(result.grid.labels, bundle.gt.labels, cfg.pipeline.num_classes,
                            cfg.miou_mode);
  return result;
}

void save_model_checkpoint(const std::string& path, Model& model, AdamState* opt) {
  NamedTensorFile file;
  for (const auto& [name, tensor] : model.params.entries()) {
    file.tensors.emplace_back(name, tensor);
  }
  if (opt) {
    file.tensors.emplace_back("opt.step",
                              Tensor::from({1}, {real(opt->step_count())}));
    const auto& params = opt->params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string name = model.params.entries()[i].first;
      file.tensors.emplace_back("opt.m." + name,
                                Tensor::from(params[i].shape(), opt->moment1(i)));
      file.tensors.emplace_back("opt.v." + name,
                                Tensor::from(params[i].shape(), opt->moment2(i)));
    }
  }
  save_checkpoint(path, file);
}

void load_model_checkpoint(const std::string& path, Model& model, AdamState* opt) {
  NamedTensorFile file = load_checkpoint(path);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, tensor] : file.tensors) by_name.emplace(name, tensor);

  for (const auto& [name, tensor] : model.params.entries()) {
    auto it = by_name.find(name);
    require(it != by_name.end(), "checkpoint missing tensor: " + name);
    require(it->second.shape() == tensor.shape(), "checkpoint shape mismatch for " + name);
    Tensor dst = tensor;  // shared handle: writes land in the model
    dst.values() = it->second.values();
  }
  if (opt) {
    auto st = by_name.find("opt.step");
    if (st != by_name.end()) opt->set_step_count(std::size_t(st->second.values()[0]));
    const auto& params = opt->params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string name = model.params.entries()[i].first;
      auto m = by_name.find("opt.m." + name);
      auto v = by_name.find("opt.v." + name);
      if (m != by_name.end()) opt->moment1(i) = m->second.values();
      if (v != by_name.end()) opt->moment2(i) = v->second.values();
    }
  }
}

EvalResult evaluate_model(Model& model, const std::vector<SceneBundle>& scenes,
                          const RunConfig& cfg) {
  require(!scenes.empty(), "evaluate_model: no scenes");
  std::vector<ConfusionTable> tables(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    Tape tape;
    NoGradGuard ng(tape);
    auto outs = run_pipeline(tape, model, inputs_for(scenes[i], model.cfg));
    const auto labels = labels_from_tensors(outs.back().grid.occupancy,
                                            outs.back().grid.class_probs, model.splat);
    tables[i] = confusion(labels, scenes[i].gt.labels, model.cfg.num_classes);
  }, 1);
  ConfusionTable total = tables[0];
  for (std::size_t i = 1; i < tables.size(); ++i) total.merge(tables[i]);
  return evaluate_counts(total, cfg.miou_mode);
}

TrainResult train_pipeline(const std::vector<SceneBundle>& scenes, const RunConfig& cfg,
                           const std::string& out_dir, std::ostream* console) {
  require(scenes.size() >= 2, "training needs at least 2 scenes (train + held-out)");
  cfg.validate();
  fs::create_directories(out_dir);

  const std::size_t holdout =
      std::max<std::size_t>(1, std::size_t(std::llround(cfg.holdout_fraction * scenes.size())));
  require(holdout < scenes.size(), "holdout split leaves no training scenes");
  std::vector<SceneBundle> train_set(scenes.begin(), scenes.end() - holdout);
  std::vector<SceneBundle> held_out(scenes.end() - holdout, scenes.end());

  const GridSpec grid = scenes[0].gt.spec;
  for (const auto& s : scenes) {
    require(s.gt.spec == grid, "all scenes must share one grid spec");
  }

  Model model = make_model(cfg.pipeline, grid, cfg.splat,
                           cfg.pipeline.init == InitStrategy::points ? &train_set[0].points
                                                                     : nullptr);
  AdamState opt(model.params.tensors(), cfg.optim);
  if (!cfg.decay_gaussian_params) {
    const auto& entries = model.params.entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].first.rfind("init.", 0) == 0) opt.set_decay_scale(i, 0.0);
    }
  }

  TrainResult result;
  result.initial_holdout = evaluate_model(model, held_out, cfg);
  result.checkpoint_path = out_dir + "/checkpoint.gfwt";

  std::ofstream log(out_dir + "/log.jsonl");
  require(log.good(), "cannot open training log in " + out_dir);

  // deterministic scene order: reshuffled per epoch from (seed, epoch)
  std::vector<std::size_t> order(train_set.size());
  auto reshuffle = [&](std::size_t epoch) {
    Rng rng(splitmix64(cfg.pipeline.seed * 1000003 + epoch));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.next_below(i)]);
    }
  };

  bool saved_any = false;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const std::size_t epoch = step / train_set.size();
    const std::size_t slot = step % train_set.size();
    if (slot == 0) reshuffle(epoch);
    const SceneBundle& scene = train_set[order[slot]];

    double loss = 0.0;
    LossTerms terms;
    try {
      Tape tape;
      model.params.zero_grads();
      auto outs = run_pipeline(tape, model, inputs_for(scene, model.cfg));
      std::vector<SplatTensors> grids;
      for (const auto& o : outs) grids.push_back(o.grid);
      terms = total_loss(tape, grids, scene.gt.labels);
      loss = double(terms.total.item());
      require(std::isfinite(loss), "non-finite loss");
      tape.backward(terms.total);
    } catch (const Error& e) {
      if (console) {
        *console << "aborting at step " << step << ": " << e.what()
                 << (saved_any ? " (last good checkpoint kept)" : "") << "\n";
      }
      log.flush();
      fail("training diverged at step " + std::to_string(step) + ": " + e.what() +
           (saved_any ? "; last good checkpoint: " + result.checkpoint_path : ""));
    }
    result.loss_trace.push_back(loss);
    const double lr = lr_schedule(step + 1, cfg.warmup_steps, cfg.total_steps, cfg.optim.lr);
    opt.step(lr);

    if (cfg.log_every && step % cfg.log_every == 0) {
      nlohmann::json line;
      line["step"] = step;
      line["lr"] = lr;
      line["loss"] = loss;
      line["block_bce"] = terms.block_bce;
      line["block_lovasz"] = terms.block_lovasz;
      log << line.dump() << "\n";
    }
    if ((step + 1) % std::max<std::size_t>(1, cfg.eval_every) == 0 ||
        step + 1 == cfg.total_steps) {
      for (const auto& [name, tensor] : model.params.entries()) {
        if (!all_finite(tensor.values())) {
          fail("training diverged at step " + std::to_string(step + 1) +
               ": non-finite parameter " + name +
               (saved_any ? "; last good checkpoint: " + result.checkpoint_path : ""));
        }
      }
      save_model_checkpoint(result.checkpoint_path, model, &opt);
      saved_any = true;
      const EvalResult ev = evaluate_model(model, held_out, cfg);
      if (console) {
        *console << "step " << (step + 1) << " loss " << loss << " holdout iou " << ev.iou
                 << " miou " << ev.miou << "\n";
      }
    }
  }

  result.final_holdout = evaluate_model(model, held_out, cfg);
  log.flush();
  return result;
}

}  // namespace gocc
