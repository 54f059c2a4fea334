#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gocc/io.hpp"
#include "gocc/losses.hpp"
#include "gocc/metrics.hpp"
#include "gocc/optim.hpp"
#include "gocc/scene.hpp"
#include "gocc/splat.hpp"

namespace py = pybind11;
using namespace gocc;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LArray = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>;

GridSpec grid_from_args(const std::array<double, 3>& min_corner, double voxel_size,
                        const std::array<int, 3>& dims) {
  GridSpec spec;
  spec.min_corner = Vec3(min_corner[0], min_corner[1], min_corner[2]);
  spec.voxel_size = voxel_size;
  spec.dims = Idx3(dims[0], dims[1], dims[2]);
  spec.validate();
  return spec;
}

std::vector<SemanticGaussian> gaussians_from_arrays(const DArray& means, const DArray& scales,
                                                    const DArray& rotations,
                                                    const DArray& opacities, const DArray& logits) {
  require(means.ndim() == 2 && means.shape(1) == 3, "means must be (P,3)");
  const std::size_t p = std::size_t(means.shape(0));
  require(scales.ndim() == 2 && std::size_t(scales.shape(0)) == p && scales.shape(1) == 3,
          "scales must be (P,3)");
  require(rotations.ndim() == 2 && std::size_t(rotations.shape(0)) == p && rotations.shape(1) == 4,
          "rotations must be (P,4)");
  require(opacities.ndim() == 1 && std::size_t(opacities.shape(0)) == p, "opacities must be (P,)");
  require(logits.ndim() == 2 && std::size_t(logits.shape(0)) == p, "logits must be (P,C)");
  const std::size_t c = std::size_t(logits.shape(1));

  std::vector<SemanticGaussian> out(p);
  for (std::size_t i = 0; i < p; ++i) {
    auto& g = out[i];
    for (int k = 0; k < 3; ++k) {
      g.mean[k] = means.at(i, k);
      g.scale[k] = scales.at(i, k);
    }
    Vec4 q;
    for (int k = 0; k < 4; ++k) q[k] = rotations.at(i, k);
    require(q.norm() > 1e-8, "quaternion norm too small");
    g.rotation = q / q.norm();
    g.opacity = std::min(1.0, std::max(0.0, opacities.at(i)));
    g.logits.resize(c);
    for (std::size_t k = 0; k < c; ++k) g.logits[k] = logits.at(i, k);
  }
  return out;
}

py::array grid_array(const std::vector<real>& values, const GridSpec& spec,
                     std::size_t channels = 0) {
  // row-major with x fastest: numpy shape (nz, ny, nx[, C])
  std::vector<py::ssize_t> shape = {spec.dims[2], spec.dims[1], spec.dims[0]};
  if (channels) shape.push_back(py::ssize_t(channels));
  py::array_t<double> out(shape);
  auto* dst = out.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) dst[i] = double(values[i]);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "semantic gaussian splatting for voxel occupancy grids";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "GoccError");

  m.def(
      "build_covariance",
      [](const std::array<double, 3>& scale, const std::array<double, 4>& rotation) {
        const Mat3 sigma = build_covariance(Vec3(scale[0], scale[1], scale[2]),
                                            Vec4(rotation[0], rotation[1], rotation[2],
                                                 rotation[3]));
        py::array_t<double> out({3, 3});
        for (int r = 0; r < 3; ++r)
          for (int c = 0; c < 3; ++c) out.mutable_at(r, c) = sigma(r, c);
        return out;
      },
      py::arg("scale"), py::arg("rotation"),
      "Covariance R diag(s)^2 R^T of a gaussian; rotation is (w,x,y,z).");

  m.def(
      "gaussian_weight",
      [](const std::array<double, 3>& x, const std::array<double, 3>& mean,
         const std::array<double, 3>& scale, const std::array<double, 4>& rotation) {
        SemanticGaussian g;
        g.mean = Vec3(mean[0], mean[1], mean[2]);
        g.scale = Vec3(scale[0], scale[1], scale[2]);
        Vec4 q(rotation[0], rotation[1], rotation[2], rotation[3]);
        g.rotation = q / q.norm();
        g.opacity = 1.0;
        g.logits = {0.0};
        return gaussian_weight(Vec3(x[0], x[1], x[2]), g);
      },
      py::arg("x"), py::arg("mean"), py::arg("scale"), py::arg("rotation"),
      "Unnormalized density exp(-mahalanobis^2 / 2), peak 1 at the mean.");

  m.def(
      "splat_occupancy",
      [](const DArray& means, const DArray& scales, const DArray& rotations,
         const DArray& opacities, const DArray& logits, const std::array<double, 3>& min_corner,
         double voxel_size, const std::array<int, 3>& dims, double cutoff_sigma) {
        const GridSpec spec = grid_from_args(min_corner, voxel_size, dims);
        SplatConfig cfg;
        cfg.cutoff_sigma = cutoff_sigma;
        const auto gs = gaussians_from_arrays(means, scales, rotations, opacities, logits);
        return grid_array(splat_occupancy(gs, spec, cfg), spec);
      },
      py::arg("means"), py::arg("scales"), py::arg("rotations"), py::arg("opacities"),
      py::arg("logits"), py::arg("min_corner"), py::arg("voxel_size"), py::arg("dims"),
      py::arg("cutoff_sigma") = 4.0,
      "Probabilistic superposition occupancy on a voxel grid, numpy (nz,ny,nx).");

  m.def(
      "splat_semantics",
      [](const DArray& means, const DArray& scales, const DArray& rotations,
         const DArray& opacities, const DArray& logits, const std::array<double, 3>& min_corner,
         double voxel_size, const std::array<int, 3>& dims, double cutoff_sigma,
         double occupancy_threshold) {
        const GridSpec spec = grid_from_args(min_corner, voxel_size, dims);
        SplatConfig cfg;
        cfg.cutoff_sigma = cutoff_sigma;
        cfg.occupancy_threshold = occupancy_threshold;
        const auto gs = gaussians_from_arrays(means, scales, rotations, opacities, logits);
        const SemanticGrid grid = splat_semantics(gs, spec, cfg);
        py::array_t<std::uint16_t> labels({spec.dims[2], spec.dims[1], spec.dims[0]});
        std::copy(grid.labels.begin(), grid.labels.end(), labels.mutable_data());
        return py::make_tuple(grid_array(grid.occupancy, spec),
                              grid_array(grid.class_probs, spec, grid.num_classes), labels);
      },
      py::arg("means"), py::arg("scales"), py::arg("rotations"), py::arg("opacities"),
      py::arg("logits"), py::arg("min_corner"), py::arg("voxel_size"), py::arg("dims"),
      py::arg("cutoff_sigma") = 4.0, py::arg("occupancy_threshold") = 0.5,
      "Occupancy, class probabilities and labels: (alpha, probs, labels).");

  m.def(
      "evaluate",
      [](const LArray& pred, const LArray& gt, std::size_t num_classes, const std::string& mode) {
        require(pred.size() == gt.size(), "prediction/label size mismatch");
        std::vector<std::uint16_t> p(pred.data(), pred.data() + pred.size());
        std::vector<std::uint16_t> g(gt.data(), gt.data() + gt.size());
        const EvalResult r =
            evaluate(p, g, num_classes, mode == "all" ? MiouMode::all : MiouMode::present);
        py::dict out;
        out["iou"] = r.iou;
        out["miou"] = r.miou;
        out["per_class_iou"] = r.per_class_iou;
        return out;
      },
      py::arg("pred_labels"), py::arg("gt_labels"), py::arg("num_classes"),
      py::arg("miou_mode") = "present",
      "Binary IoU plus mean per-class IoU over non-empty classes.");

  m.def(
      "lovasz_softmax",
      [](const DArray& probs, const LArray& labels) {
        require(probs.ndim() == 2, "probs must be (V,C)");
        std::vector<real> p(probs.data(), probs.data() + probs.size());
        std::vector<std::uint16_t> l(labels.data(), labels.data() + labels.size());
        Tape tape;
        Tensor t = Tensor::from({std::size_t(probs.shape(0)), std::size_t(probs.shape(1))}, p);
        return double(lovasz_softmax(tape, t, l).item());
      },
      py::arg("class_probs"), py::arg("gt_labels"));

  m.def(
      "bce_occupancy",
      [](const DArray& alpha, const LArray& labels) {
        std::vector<real> a(alpha.data(), alpha.data() + alpha.size());
        std::vector<std::uint16_t> l(labels.data(), labels.data() + labels.size());
        Tape tape;
        return double(bce_occupancy(tape, Tensor::from({a.size()}, a), l).item());
      },
      py::arg("alpha"), py::arg("gt_labels"));

  m.def("lr_schedule", &lr_schedule, py::arg("step"), py::arg("warmup_steps"),
        py::arg("total_steps"), py::arg("peak_lr"),
        "Linear warmup then cosine decay to zero.");

  m.def(
      "generate_scene",
      [](const std::string& spec_json, const std::string& out_dir) {
        const SceneSpec spec =
            spec_json.empty() ? default_scene_spec() : scene_spec_from_json(spec_json);
        save_bundle(out_dir, gen_scene(spec), spec);
      },
      py::arg("spec_json") = std::string(), py::arg("out_dir"),
      "Generate one synthetic scene bundle directory.");

  m.def("default_scene_spec_json", [] { return scene_spec_to_json(default_scene_spec()); });

  m.def(
      "load_grid",
      [](const std::string& path) {
        const SemanticGrid grid = load_grid(path);
        py::dict out;
        out["min_corner"] = std::array<double, 3>{grid.spec.min_corner[0], grid.spec.min_corner[1],
                                                  grid.spec.min_corner[2]};
        out["voxel_size"] = grid.spec.voxel_size;
        out["dims"] = std::array<int, 3>{grid.spec.dims[0], grid.spec.dims[1], grid.spec.dims[2]};
        if (!grid.labels.empty()) {
          py::array_t<std::uint16_t> labels({grid.spec.dims[2], grid.spec.dims[1],
                                             grid.spec.dims[0]});
          std::copy(grid.labels.begin(), grid.labels.end(), labels.mutable_data());
          out["labels"] = labels;
        }
        if (!grid.occupancy.empty()) out["occupancy"] = grid_array(grid.occupancy, grid.spec);
        if (grid.has_class_probs()) {
          out["class_probs"] = grid_array(grid.class_probs, grid.spec, grid.num_classes);
        }
        return out;
      },
      py::arg("path"), "Read a grid file into numpy arrays.");
}
