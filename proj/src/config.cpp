#include "gocc/config.hpp"

#include "gocc/json_util.hpp"

namespace gocc {

std::vector<std::string> default_class_names(std::size_t num_classes) {
  std::vector<std::string> names = {"empty", "ground", "wall", "box", "cylinder"};
  while (names.size() < num_classes) names.push_back("class_" + std::to_string(names.size()));
  names.resize(num_classes);
  return names;
}

void RunConfig::validate() const {
  pipeline.validate();
  splat.validate();
  require(optim.lr > 0, "peak learning rate must be positive");
  require(total_steps >= 1, "total_steps must be positive");
  require(warmup_steps < total_steps, "warmup must be shorter than total_steps");
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "holdout_fraction in (0,1)");
  require(fit_steps >= 1, "fit steps must be positive");
  require(fit_lr > 0, "fit learning rate must be positive");
  require(fit_init_scale >= pipeline.scale_min && fit_init_scale <= pipeline.scale_max,
          "fit init_scale must lie inside the scale clamp range");
  require(class_names.empty() || class_names.size() == pipeline.num_classes,
          "class name table must match num_classes");
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.class_names = default_class_names(cfg.pipeline.num_classes);
  return cfg;
}

namespace {

std::vector<Modality> parse_modalities(const nlohmann::json& arr) {
  std::vector<Modality> out;
  for (const auto& m : arr) {
    const auto parsed = modality_from_name(m.get<std::string>());
    if (!parsed) fail("config: unknown modality \"" + m.get<std::string>() + "\"");
    out.push_back(*parsed);
  }
  return out;
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    reject_unknown_keys(j, {"pipeline", "splat", "optim", "train", "eval", "fit", "classes"},
                        "config");
    RunConfig cfg;
    if (j.contains("pipeline")) {
      const auto& p = j.at("pipeline");
      reject_unknown_keys(p,
                          {"blocks", "gaussians", "channel_width", "num_classes",
                           "feature_channels", "ref_points", "samples_per_point", "levels",
                           "modalities", "init", "seed", "offset_range", "scale_min", "scale_max",
                           "fusion_voxel_size"},
                          "config pipeline");
      auto& pc = cfg.pipeline;
      pc.blocks = json_get_or<std::size_t>(p, "blocks", pc.blocks);
      pc.gaussian_count = json_get_or<std::size_t>(p, "gaussians", pc.gaussian_count);
      pc.channel_width = json_get_or<std::size_t>(p, "channel_width", pc.channel_width);
      pc.num_classes = json_get_or<std::size_t>(p, "num_classes", pc.num_classes);
      pc.feature_channels = json_get_or<std::size_t>(p, "feature_channels", pc.feature_channels);
      pc.num_ref_points = json_get_or<std::size_t>(p, "ref_points", pc.num_ref_points);
      pc.samples_per_point = json_get_or<std::size_t>(p, "samples_per_point", pc.samples_per_point);
      pc.num_levels = json_get_or<std::size_t>(p, "levels", pc.num_levels);
      if (p.contains("modalities")) pc.modalities = parse_modalities(p.at("modalities"));
      if (p.contains("init")) {
        const auto parsed = init_strategy_from_name(p.at("init").get<std::string>());
        if (!parsed) fail("config: unknown init strategy");
        pc.init = *parsed;
      }
      pc.seed = json_get_or<std::uint64_t>(p, "seed", pc.seed);
      pc.offset_range = json_get_or<double>(p, "offset_range", pc.offset_range);
      pc.scale_min = json_get_or<double>(p, "scale_min", pc.scale_min);
      pc.scale_max = json_get_or<double>(p, "scale_max", pc.scale_max);
      pc.fusion_voxel_size = json_get_or<double>(p, "fusion_voxel_size", pc.fusion_voxel_size);
    }
    if (j.contains("splat")) {
      const auto& s = j.at("splat");
      reject_unknown_keys(s, {"cutoff_sigma", "occupancy_threshold", "eps"}, "config splat");
      cfg.splat.cutoff_sigma = json_get_or<double>(s, "cutoff_sigma", cfg.splat.cutoff_sigma);
      cfg.splat.occupancy_threshold =
          json_get_or<double>(s, "occupancy_threshold", cfg.splat.occupancy_threshold);
      cfg.splat.eps = json_get_or<double>(s, "eps", cfg.splat.eps);
    }
    if (j.contains("optim")) {
      const auto& o = j.at("optim");
      reject_unknown_keys(o,
                          {"peak_lr", "warmup_steps", "total_steps", "beta1", "beta2", "eps",
                           "weight_decay", "decay_gaussian_params"},
                          "config optim");
      cfg.optim.lr = json_get_or<double>(o, "peak_lr", cfg.optim.lr);
      cfg.warmup_steps = json_get_or<std::size_t>(o, "warmup_steps", cfg.warmup_steps);
      cfg.total_steps = json_get_or<std::size_t>(o, "total_steps", cfg.total_steps);
      cfg.optim.beta1 = json_get_or<double>(o, "beta1", cfg.optim.beta1);
      cfg.optim.beta2 = json_get_or<double>(o, "beta2", cfg.optim.beta2);
      cfg.optim.eps = json_get_or<double>(o, "eps", cfg.optim.eps);
      cfg.optim.weight_decay = json_get_or<double>(o, "weight_decay", cfg.optim.weight_decay);
      cfg.decay_gaussian_params =
          json_get_or<bool>(o, "decay_gaussian_params", cfg.decay_gaussian_params);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      reject_unknown_keys(t, {"eval_every", "log_every", "holdout_fraction"}, "config train");
      cfg.eval_every = json_get_or<std::size_t>(t, "eval_every", cfg.eval_every);
      cfg.log_every = json_get_or<std::size_t>(t, "log_every", cfg.log_every);
      cfg.holdout_fraction = json_get_or<double>(t, "holdout_fraction", cfg.holdout_fraction);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      reject_unknown_keys(e, {"miou_mode"}, "config eval");
      if (e.contains("miou_mode")) {
        const std::string mode = e.at("miou_mode").get<std::string>();
        if (mode == "present") {
          cfg.miou_mode = MiouMode::present;
        } else if (mode == "all") {
          cfg.miou_mode = MiouMode::all;
        } else {
          fail("config eval: miou_mode must be \"present\" or \"all\"");
        }
      }
    }
    if (j.contains("fit")) {
      const auto& f = j.at("fit");
      reject_unknown_keys(f, {"steps", "lr", "init", "init_scale", "balanced_init"},
                          "config fit");
      cfg.fit_steps = json_get_or<std::size_t>(f, "steps", cfg.fit_steps);
      cfg.fit_lr = json_get_or<double>(f, "lr", cfg.fit_lr);
      cfg.fit_init_scale = json_get_or<double>(f, "init_scale", cfg.fit_init_scale);
      cfg.fit_balanced_init = json_get_or<bool>(f, "balanced_init", cfg.fit_balanced_init);
      if (f.contains("init")) {
        const auto parsed = init_strategy_from_name(f.at("init").get<std::string>());
        if (!parsed) fail("config fit: unknown init strategy");
        cfg.fit_init = *parsed;
      }
    }
    if (j.contains("classes")) {
      cfg.class_names = j.at("classes").get<std::vector<std::string>>();
    } else {
      cfg.class_names = default_class_names(cfg.pipeline.num_classes);
    }
    cfg.validate();
    return cfg;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  nlohmann::json modalities = nlohmann::json::array();
  for (Modality m : cfg.pipeline.modalities) modalities.push_back(modality_name(m));
  j["pipeline"] = {{"blocks", cfg.pipeline.blocks},
                   {"gaussians", cfg.pipeline.gaussian_count},
                   {"channel_width", cfg.pipeline.channel_width},
                   {"num_classes", cfg.pipeline.num_classes},
                   {"feature_channels", cfg.pipeline.feature_channels},
                   {"ref_points", cfg.pipeline.num_ref_points},
                   {"samples_per_point", cfg.pipeline.samples_per_point},
                   {"levels", cfg.pipeline.num_levels},
                   {"modalities", modalities},
                   {"init", init_strategy_name(cfg.pipeline.init)},
                   {"seed", cfg.pipeline.seed},
                   {"offset_range", cfg.pipeline.offset_range},
                   {"scale_min", cfg.pipeline.scale_min},
                   {"scale_max", cfg.pipeline.scale_max},
                   {"fusion_voxel_size", cfg.pipeline.fusion_voxel_size}};
  j["splat"] = {{"cutoff_sigma", cfg.splat.cutoff_sigma},
                {"occupancy_threshold", cfg.splat.occupancy_threshold},
                {"eps", cfg.splat.eps}};
  j["optim"] = {{"peak_lr", cfg.optim.lr},
                {"warmup_steps", cfg.warmup_steps},
                {"total_steps", cfg.total_steps},
                {"beta1", cfg.optim.beta1},
                {"beta2", cfg.optim.beta2},
                {"eps", cfg.optim.eps},
                {"weight_decay", cfg.optim.weight_decay},
                {"decay_gaussian_params", cfg.decay_gaussian_params}};
  j["train"] = {{"eval_every", cfg.eval_every},
                {"log_every", cfg.log_every},
                {"holdout_fraction", cfg.holdout_fraction}};
  j["eval"] = {{"miou_mode", cfg.miou_mode == MiouMode::present ? "present" : "all"}};
  j["fit"] = {{"steps", cfg.fit_steps},
              {"lr", cfg.fit_lr},
              {"init", init_strategy_name(cfg.fit_init)},
              {"init_scale", cfg.fit_init_scale},
              {"balanced_init", cfg.fit_balanced_init}};
  j["classes"] = cfg.class_names;
  return j.dump(2);
}

}  // namespace gocc
