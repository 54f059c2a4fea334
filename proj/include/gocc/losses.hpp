#pragma once

#include "gocc/splat.hpp"

namespace gocc {

// Mean over voxels of the binary cross entropy between splatted alpha and the
// occupied indicator (label != 0), epsilon-guarded logs.
Tensor bce_occupancy(Tape& tape, const Tensor& alpha, const std::vector<std::uint16_t>& gt_labels);

// Lovasz extension of the Jaccard loss over softmax-style class
// probabilities. Per class present in gt (empty class included): errors are
// sorted descending (stable, ties by voxel index) and folded against the
// Jaccard gradient vector; the result is the mean over those classes. The
// sort is treated as a fixed permutation by the gradient.
Tensor lovasz_softmax(Tape& tape, const Tensor& class_probs,
                      const std::vector<std::uint16_t>& gt_labels);

// Per-class lovasz values for the classes present in gt (forward only).
std::vector<std::pair<std::uint16_t, double>> lovasz_per_class(
    const std::vector<real>& class_probs, std::size_t num_classes,
    const std::vector<std::uint16_t>& gt_labels);

struct LossTerms {
  Tensor total;
  std::vector<double> block_bce;
  std::vector<double> block_lovasz;
};

// Sum over refinement iterations of (lovasz + bce), equal weights.
LossTerms total_loss(Tape& tape, const std::vector<SplatTensors>& block_grids,
                     const std::vector<std::uint16_t>& gt_labels);

}  // namespace gocc
