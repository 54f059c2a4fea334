#include "gocc/bench.hpp"

#include <chrono>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gocc/losses.hpp"
#include "gocc/refine.hpp"
#include "gocc/scene.hpp"
#include "gocc/train.hpp"

namespace gocc {

double peak_rss_mb() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream is(line.substr(6));
      double kb = 0;
      is >> kb;
      return kb / 1024.0;
    }
  }
  return 0.0;
}

double BenchReport::entry_ms(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e.ms;
  }
  fail("bench report has no entry " + name);
}

std::string BenchReport::to_json() const {
  nlohmann::json j;
  j["preset"] = preset;
  nlohmann::json es;
  for (const auto& e : entries) es[e.name] = e.ms;
  j["entries_ms"] = es;
  j["speedup_dense_over_culled"] = speedup_dense_over_culled;
  j["peak_rss_mb"] = peak_rss_mb;
  return j.dump(2);
}

std::string BenchReport::to_table() const {
  std::ostringstream os;
  os << "preset: " << preset << "\n";
  for (const auto& e : entries) {
    os << "  " << e.name;
    for (std::size_t i = e.name.size(); i < 24; ++i) os << ' ';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%12.3f ms", e.ms);
    os << buf << "\n";
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "  speedup dense/culled %10.1fx\n  peak rss %15.1f MB\n",
                speedup_dense_over_culled, peak_rss_mb);
  os << buf;
  return os.str();
}

namespace {

// Fastest of N batched samples. The minimum is the stable estimator for
// compute-bound stages on shared machines: any clean sample recovers the
// true cost, where means and medians absorb scheduler interference.
template <typename Fn>
double time_best_ms(std::size_t repeats, Fn&& fn) {
  // warmup doubles as the calibration sample; sub-millisecond work gets
  // batched so each timed sample is long enough to ride out timer noise
  const auto c0 = std::chrono::steady_clock::now();
  fn();
  const auto c1 = std::chrono::steady_clock::now();
  const double once_ms = std::chrono::duration<double, std::milli>(c1 - c0).count();
  const std::size_t batch = once_ms >= 1.0 ? 1 : std::size_t(std::ceil(2.0 / std::max(1e-4, once_ms)));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < std::max<std::size_t>(1, repeats); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t j = 0; j < batch; ++j) fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(t1 - t0).count() / double(batch));
  }
  return best;
}

struct BenchSetup {
  GridSpec grid;
  PipelineConfig cfg;
  SplatConfig splat;
  std::vector<SemanticGaussian> gaussians;
  CullList whole_grid;  // disables culling when passed to splat_fields
};

BenchSetup make_setup(const std::string& preset) {
  BenchSetup s;
  if (preset == "full") {
    s.grid.min_corner = Vec3(-50, -50, -5);
    s.grid.voxel_size = 0.5;
    s.grid.dims = Idx3(200, 200, 16);
    s.cfg.gaussian_count = 6400;
    s.cfg.channel_width = 128;
  } else if (preset == "desk") {
    s.grid.min_corner = Vec3(-16, -16, 0);
    s.grid.voxel_size = 0.5;
    s.grid.dims = Idx3(64, 64, 8);
    s.cfg.gaussian_count = 512;
    s.cfg.channel_width = 32;
  } else {
    fail("unknown bench preset: " + preset + " (expected desk or full)");
  }
  s.cfg.blocks = 1;
  s.cfg.num_classes = 17;
  s.cfg.feature_channels = 32;
  s.cfg.modalities = {Modality::camera};
  s.cfg.seed = 42;

  Rng rng(7);
  GaussianInit init = init_gaussians(s.cfg, s.grid, nullptr, rng);
  Tape tape;
  NoGradGuard ng(tape);
  GaussianTensors g = materialize_init(tape, init, s.cfg.scale_min, s.cfg.scale_max);
  s.gaussians = g.snapshot();
  for (auto& gg : s.gaussians) {
    gg.opacity = 0.6;  // representative mid-training opacity
    for (auto& l : gg.logits) l = rng.uniform(-1, 1);
  }
  CullBox whole;
  whole.lo = Idx3(0, 0, 0);
  whole.hi = s.grid.dims - Idx3(1, 1, 1);
  s.whole_grid.boxes.assign(s.gaussians.size(), whole);
  return s;
}

}  // namespace

BenchReport run_bench(const std::string& preset, std::size_t repeats) {
  BenchSetup s = make_setup(preset);
  BenchReport report;
  report.preset = preset;

  report.entries.push_back(
      {"cull_build", time_best_ms(repeats, [&] { cull(s.gaussians, s.grid, s.splat); })});

  const double culled_ms = time_best_ms(
      repeats, [&] { splat_fields(s.gaussians, s.grid, s.splat, false); });
  report.entries.push_back({"splat_culled", culled_ms});

  // dense pass is expensive at full scale: time a single pass, no warmup
  double dense_ms = 0;
  if (preset == "full") {
    const auto t0 = std::chrono::steady_clock::now();
    splat_fields(s.gaussians, s.grid, s.splat, false, &s.whole_grid);
    const auto t1 = std::chrono::steady_clock::now();
    dense_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  } else {
    dense_ms = time_best_ms(repeats, [&] {
      splat_fields(s.gaussians, s.grid, s.splat, false, &s.whole_grid);
    });
  }
  report.entries.push_back({"splat_dense", dense_ms});
  report.speedup_dense_over_culled = dense_ms / culled_ms;

  report.entries.push_back({"splat_semantic_culled", time_best_ms(repeats, [&] {
                              splat_fields(s.gaussians, s.grid, s.splat, true);
                            })});

  // one synthetic scene drives the network-stage timings
  SceneSpec scene_spec = default_scene_spec();
  scene_spec.grid = s.grid;
  scene_spec.feature_channels = s.cfg.feature_channels;
  scene_spec.seed = 11;
  SceneBundle bundle = gen_scene(scene_spec);
  Model model = make_model(s.cfg, s.grid, s.splat);
  ModalityInputs inputs = inputs_for(bundle, s.cfg);

  {
    Tape tape;
    NoGradGuard ng(tape);
    GaussianTensors g = materialize_init(tape, model.init, s.cfg.scale_min, s.cfg.scale_max);
    auto& enc = model.encoder_for(0, Modality::camera);
    Tensor feat;
    report.entries.push_back({"encoder", time_best_ms(repeats, [&] {
                                feat = encode_modality(tape, g.means, g.scales, g.rotations,
                                                       g.queries, inputs[Modality::camera], enc);
                              })});
    Tensor fused;
    report.entries.push_back({"fusion", time_best_ms(repeats, [&] {
                                fused = fuse(tape, {feat}, g.means.values(),
                                             model.blocks[0].fusion);
                              })});
    report.entries.push_back({"refine", time_best_ms(repeats, [&] {
                                refine_step(tape, g, fused, model.blocks[0].refine);
                              })});
  }
  report.entries.push_back({"full_block", time_best_ms(repeats, [&] {
                              Tape tape;
                              NoGradGuard ng(tape);
                              run_pipeline(tape, model, inputs);
                            })});

  report.peak_rss_mb = peak_rss_mb();
  return report;
}

}  // namespace gocc
