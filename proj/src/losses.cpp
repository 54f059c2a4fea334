#include "gocc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gocc/ops.hpp"

namespace gocc {

Tensor bce_occupancy(Tape& tape, const Tensor& alpha, const std::vector<std::uint16_t>& gt_labels) {
  require(alpha.size() == gt_labels.size(),
          "bce_occupancy: prediction/label size mismatch " + shape_str(alpha.shape()) + " vs " +
              std::to_string(gt_labels.size()));
  const std::size_t v = gt_labels.size();
  const real eps = real(1e-7);
  Tensor y = Tensor::zeros({v});
  Tensor y_inv = Tensor::zeros({v});
  for (std::size_t i = 0; i < v; ++i) {
    y.values()[i] = gt_labels[i] != 0 ? real(1) : real(0);
    y_inv.values()[i] = real(1) - y.values()[i];
  }
  Tensor log_a = ops::log(tape, ops::add_scalar(tape, alpha, eps));
  Tensor log_na = ops::log(tape, ops::add_scalar(tape, ops::scale(tape, alpha, real(-1)),
                                                 real(1) + eps));
  Tensor terms = ops::add(tape, ops::mul(tape, y, log_a), ops::mul(tape, y_inv, log_na));
  return ops::scale(tape, ops::mean_all(tape, terms), real(-1));
}

namespace {

struct LovaszClassPlan {
  std::uint16_t cls;
  double loss = 0.0;
  std::vector<std::uint32_t> order;  // voxel indices sorted by descending error
  std::vector<double> jaccard_grad;  // same length
};

std::vector<LovaszClassPlan> lovasz_plans(const std::vector<real>& probs, std::size_t c,
                                          const std::vector<std::uint16_t>& gt_labels) {
  const std::size_t v = gt_labels.size();
  require(v > 0, "lovasz_softmax: empty voxel set");
  require(probs.size() == v * c, "lovasz_softmax: class_probs size mismatch");
  for (std::uint16_t l : gt_labels) require(l < c, "lovasz_softmax: label out of class range");

  std::vector<std::uint32_t> class_count(c, 0);
  for (std::uint16_t l : gt_labels) class_count[l]++;

  std::vector<LovaszClassPlan> plans;
  std::vector<double> errors(v);
  for (std::uint16_t cls = 0; cls < c; ++cls) {
    if (class_count[cls] == 0) continue;  // classes present in gt only
    LovaszClassPlan plan;
    plan.cls = cls;
    for (std::size_t i = 0; i < v; ++i) {
      const double p = double(probs[i * c + cls]);
      errors[i] = gt_labels[i] == cls ? 1.0 - p : p;
    }
    plan.order.resize(v);
    std::iota(plan.order.begin(), plan.order.end(), 0u);
    std::stable_sort(plan.order.begin(), plan.order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return errors[a] > errors[b]; });

    plan.jaccard_grad.resize(v);
    const double fg_total = double(class_count[cls]);
    double cum_fg = 0.0, cum_bg = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < v; ++k) {
      const bool fg = gt_labels[plan.order[k]] == cls;
      cum_fg += fg ? 1.0 : 0.0;
      cum_bg += fg ? 0.0 : 1.0;
      const double inter = fg_total - cum_fg;
      const double uni = fg_total + cum_bg;
      const double jacc = 1.0 - inter / uni;
      plan.jaccard_grad[k] = jacc - prev;
      prev = jacc;
      plan.loss += errors[plan.order[k]] * plan.jaccard_grad[k];
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

}  // namespace

std::vector<std::pair<std::uint16_t, double>> lovasz_per_class(
    const std::vector<real>& class_probs, std::size_t num_classes,
    const std::vector<std::uint16_t>& gt_labels) {
  std::vector<std::pair<std::uint16_t, double>> out;
  for (const auto& plan : lovasz_plans(class_probs, num_classes, gt_labels)) {
    out.emplace_back(plan.cls, plan.loss);
  }
  return out;
}

Tensor lovasz_softmax(Tape& tape, const Tensor& class_probs,
                      const std::vector<std::uint16_t>& gt_labels) {
  require(class_probs.rank() == 2, "lovasz_softmax: class_probs must be (V, C)");
  const std::size_t c = class_probs.dim(1);
  require(class_probs.dim(0) == gt_labels.size(), "lovasz_softmax: label count mismatch");

  auto plans = std::make_shared<std::vector<LovaszClassPlan>>(
      lovasz_plans(class_probs.values(), c, gt_labels));
  const std::size_t n_classes = plans->size();
  require(n_classes > 0, "lovasz_softmax: no class present in ground truth");
  double total = 0.0;
  for (const auto& plan : *plans) total += plan.loss;
  Tensor out = Tensor::scalar(real(total / double(n_classes)));
  out.set_requires_grad(class_probs.requires_grad());

  if (tape.recording() && class_probs.requires_grad()) {
    Tensor tp = class_probs;
    Tensor tout = out;
    auto labels = gt_labels;
    tape.record("lovasz_softmax", [tp, tout, plans, labels, c, n_classes]() mutable {
      const double go = double(tout.grad()[0]) / double(n_classes);
      auto& g = tp.grad();
      for (const auto& plan : *plans) {
        for (std::size_t k = 0; k < plan.order.size(); ++k) {
          const std::uint32_t vi = plan.order[k];
          const double sign = labels[vi] == plan.cls ? -1.0 : 1.0;
          g[vi * c + plan.cls] += real(go * sign * plan.jaccard_grad[k]);
        }
      }
    });
  }
  return out;
}

LossTerms total_loss(Tape& tape, const std::vector<SplatTensors>& block_grids,
                     const std::vector<std::uint16_t>& gt_labels) {
  require(!block_grids.empty(), "total_loss: no block outputs");
  LossTerms terms;
  Tensor total;
  for (const auto& grid : block_grids) {
    Tensor lov = lovasz_softmax(tape, grid.class_probs, gt_labels);
    Tensor bce = bce_occupancy(tape, grid.occupancy, gt_labels);
    terms.block_lovasz.push_back(double(lov.item()));
    terms.block_bce.push_back(double(bce.item()));
    Tensor sum = ops::add(tape, lov, bce);
    total = total.defined() ? ops::add(tape, total, sum) : sum;
  }
  terms.total = total;
  return terms;
}

}  // namespace gocc
