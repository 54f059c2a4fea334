#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>

#include "gocc/bench.hpp"
#include "gocc/io.hpp"
#include "gocc/train.hpp"

namespace fs = std::filesystem;
using namespace gocc;

namespace {

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return default_run_config();
  return run_config_from_json(read_text_file(path));
}

std::vector<std::string> list_scene_dirs(const std::string& root) {
  std::vector<std::string> dirs;
  require(fs::is_directory(root), "not a directory: " + root);
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      dirs.push_back(entry.path().string());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  require(!dirs.empty(), "no scene bundles under " + root);
  return dirs;
}

std::vector<SceneBundle> load_scenes(const std::string& root) {
  const auto dirs = list_scene_dirs(root);
  std::vector<SceneBundle> scenes;
  scenes.reserve(dirs.size());
  for (const auto& d : dirs) scenes.push_back(load_bundle(d));
  return scenes;
}

int cmd_gen_scenes(const std::string& spec_path, std::size_t count, std::uint64_t seed,
                   const std::string& out) {
  SceneSpec base = default_scene_spec();
  if (!spec_path.empty()) {
    try {
      base = scene_spec_from_json(read_text_file(spec_path));
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  fs::create_directories(out);
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["count"] = count;
  manifest["seed"] = seed;
  manifest["spec"] = nlohmann::json::parse(scene_spec_to_json(base));
  nlohmann::json names = nlohmann::json::array();
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec spec = base;
    spec.seed = splitmix64(seed ^ (0x5ceedull + i));
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu", i);
    const SceneBundle bundle = gen_scene(spec);
    save_bundle(out + "/" + name, bundle, spec);
    names.push_back(name);
    std::cout << "wrote " << out << "/" << name << "\n";
  }
  manifest["scenes"] = names;
  write_text_file(out + "/manifest.json", manifest.dump(2));
  return 0;
}

int cmd_fit(const std::string& scene, std::size_t gaussians, std::size_t steps,
            const std::string& config_path, const std::string& out) {
  RunConfig cfg = load_run_config(config_path);
  if (gaussians) cfg.pipeline.gaussian_count = gaussians;
  if (steps) cfg.fit_steps = steps;
  cfg.validate();

  const SceneBundle bundle = load_bundle(scene);
  fs::create_directories(out);
  std::ofstream log(out + "/log.jsonl");
  auto on_step = [&](std::size_t step, double loss, double lr) {
    nlohmann::json line;
    line["step"] = step;
    line["loss"] = loss;
    line["lr"] = lr;
    log << line.dump() << "\n";
    if (step % 50 == 0) std::cout << "step " << step << " loss " << loss << "\n";
  };
  const FitResult result = direct_fit(bundle, cfg, on_step);

  save_gaussians(out + "/gaussians.gocc", result.fitted, cfg.pipeline.num_classes);
  write_text_file(out + "/gaussians.json",
                  gaussians_to_json(result.fitted, cfg.pipeline.num_classes));
  save_grid(out + "/grid.gvox", result.grid, GridPayload::occupancy_probs);
  SemanticGrid label_grid = result.grid;
  save_grid(out + "/labels.gvox", label_grid, GridPayload::labels);
  write_text_file(out + "/metrics.json", metrics_report_json(result.metrics, cfg.class_names));
  std::cout << "fit done: iou " << result.metrics.iou << " miou " << result.metrics.miou << "\n";
  return 0;
}

int cmd_train(const std::string& scenes_dir, const std::string& config_path,
              const std::string& out) {
  RunConfig cfg = load_run_config(config_path);
  const auto scenes = load_scenes(scenes_dir);
  const TrainResult result = train_pipeline(scenes, cfg, out, &std::cout);
  nlohmann::json j;
  j["initial_holdout"] = nlohmann::json::parse(
      metrics_report_json(result.initial_holdout, cfg.class_names));
  j["final_holdout"] = nlohmann::json::parse(
      metrics_report_json(result.final_holdout, cfg.class_names));
  j["checkpoint"] = result.checkpoint_path;
  write_text_file(out + "/metrics.json", j.dump(2));
  std::cout << "train done: holdout iou " << result.final_holdout.iou << " miou "
            << result.final_holdout.miou << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& gaussians_path,
             const std::string& grids_dir, const std::string& scenes_dir,
             const std::string& config_path, const std::string& out) {
  const int modes = int(!checkpoint.empty()) + int(!gaussians_path.empty()) +
                    int(!grids_dir.empty());
  if (modes != 1) {
    throw ConfigError("eval: exactly one of --checkpoint, --gaussians, --grids is required");
  }
  RunConfig cfg = load_run_config(config_path);
  const auto dirs = list_scene_dirs(scenes_dir);

  ConfusionTable total;
  nlohmann::json per_scene;
  Model model = [&]() -> Model {
    if (!checkpoint.empty()) {
      std::vector<SceneBundle> first = {load_bundle(dirs[0])};
      Model m = make_model(cfg.pipeline, first[0].gt.spec, cfg.splat,
                           cfg.pipeline.init == InitStrategy::points ? &first[0].points : nullptr);
      load_model_checkpoint(checkpoint, m, nullptr);
      return m;
    }
    return Model{};
  }();

  for (const auto& dir : dirs) {
    const SceneBundle bundle = load_bundle(dir);
    std::vector<std::uint16_t> pred;
    if (!checkpoint.empty()) {
      Tape tape;
      NoGradGuard ng(tape);
      auto outs = run_pipeline(tape, model, inputs_for(bundle, model.cfg));
      pred = labels_from_tensors(outs.back().grid.occupancy, outs.back().grid.class_probs,
                                 cfg.splat);
    } else if (!gaussians_path.empty()) {
      const GaussianSet set = load_gaussians(gaussians_path);
      pred = splat_semantics(set.gaussians, bundle.gt.spec, cfg.splat).labels;
    } else {
      const std::string name = fs::path(dir).filename().string();
      const SemanticGrid grid = load_grid(grids_dir + "/" + name + ".gvox");
      require(grid.spec == bundle.gt.spec, "pred grid spec mismatch for " + name);
      if (!grid.labels.empty()) {
        pred = grid.labels;
      } else {
        require(grid.has_class_probs(), "grid file has no labels or class probs: " + name);
        SplatResult fields;
        fields.occupancy = grid.occupancy;
        fields.class_probs = grid.class_probs;
        fields.num_classes = grid.num_classes;
        pred = labels_from_fields(fields, cfg.splat);
      }
    }
    const ConfusionTable counts = confusion(pred, bundle.gt.labels, cfg.pipeline.num_classes);
    if (total.num_classes == 0) {
      total = counts;
    } else {
      total.merge(counts);
    }
    const EvalResult scene_eval = evaluate_counts(counts, cfg.miou_mode);
    per_scene[fs::path(dir).filename().string()] =
        nlohmann::json::parse(metrics_report_json(scene_eval, cfg.class_names));
  }

  const EvalResult aggregate = evaluate_counts(total, cfg.miou_mode);
  nlohmann::json j;
  j["aggregate"] = nlohmann::json::parse(metrics_report_json(aggregate, cfg.class_names));
  j["per_scene"] = per_scene;
  if (!out.empty()) {
    fs::create_directories(out);
    write_text_file(out + "/metrics.json", j.dump(2));
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_bench(const std::string& preset, const std::string& out, std::size_t repeats) {
  const BenchReport report = run_bench(preset, repeats);
  std::cout << report.to_table();
  if (!out.empty()) {
    fs::create_directories(out);
    write_text_file(out + "/bench.json", report.to_json());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic gaussian splatting for voxel occupancy grids"};
  app.require_subcommand(1);

  std::string spec_path, config_path, out, scene, scenes_dir;
  std::string checkpoint, gaussians_path, grids_dir, preset = "desk";
  std::size_t count = 1, gaussians = 0, steps = 0, repeats = 3;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen-scenes", "generate synthetic scene bundles");
  gen->add_option("--spec", spec_path, "scene spec JSON (defaults when omitted)");
  gen->add_option("--count", count, "number of scenes")->capture_default_str();
  gen->add_option("--seed", seed, "base seed")->capture_default_str();
  gen->add_option("--out", out, "output directory")->required();

  auto* fit = app.add_subcommand("fit", "fit gaussians directly to one scene");
  fit->add_option("--scene", scene, "scene bundle directory")->required();
  fit->add_option("--gaussians", gaussians, "gaussian count override");
  fit->add_option("--steps", steps, "step count override");
  fit->add_option("--config", config_path, "run config JSON");
  fit->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train the fusion pipeline");
  train->add_option("--scenes", scenes_dir, "directory of scene bundles")->required();
  train->add_option("--config", config_path, "run config JSON");
  train->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate predictions against scene ground truth");
  eval->add_option("--checkpoint", checkpoint, "pipeline checkpoint (GFWT)");
  eval->add_option("--gaussians", gaussians_path, "gaussian set (GOCC)");
  eval->add_option("--grids", grids_dir, "directory of predicted grids (GVOX)");
  eval->add_option("--scenes", scenes_dir, "directory of scene bundles")->required();
  eval->add_option("--config", config_path, "run config JSON");
  eval->add_option("--out", out, "output directory");

  auto* bench = app.add_subcommand("bench", "performance report");
  bench->add_option("--preset", preset, "desk or full")->capture_default_str();
  bench->add_option("--out", out, "output directory");
  bench->add_option("--repeats", repeats, "timing repetitions")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_scenes(spec_path, count, seed, out);
    if (fit->parsed()) return cmd_fit(scene, gaussians, steps, config_path, out);
    if (train->parsed()) return cmd_train(scenes_dir, config_path, out);
    if (eval->parsed()) {
      return cmd_eval(checkpoint, gaussians_path, grids_dir, scenes_dir, config_path, out);
    }
    if (bench->parsed()) return cmd_bench(preset, out, repeats);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
