#pragma once

#include "gocc/core.hpp"
#include "gocc/nn.hpp"

namespace gocc {

// Weights of the per-block fusion stage: fuser MLP over concatenated modality
// features plus a single 3^3 submanifold convolution over voxelized means.
struct FusionParams {
  Mlp fuser_mlp;             // n*D -> D
  Tensor sc_kernel;          // (27, D, D), offset-major: ((dz+1)*3+(dy+1))*3+(dx+1)
  Tensor sc_bias;            // (D)
  double fusion_voxel_size = 2.0;  // meters; coarser than the output grid
};

FusionParams make_fusion_params(std::size_t n_modalities, std::size_t d, Rng& rng,
                                double fusion_voxel_size = 2.0);

// Occupied cells at fusion resolution with one feature row per cell.
struct SparseVoxelSet {
  std::vector<Idx3> coords;            // cell coordinates, first-seen order
  std::vector<std::uint32_t> assign;   // per gaussian -> index into coords
  Tensor features;                     // (num_cells, D): per-cell mean of member rows
};

// Row-wise concatenation of P x D modality features in the caller's fixed
// modality order.
Tensor concat_modalities(Tape& tape, const std::vector<Tensor>& features);

// Cell = floor(mean / voxel_size) per axis; cell feature = mean of member
// feature rows. Assignment is a function of the mean values only and passes
// no gradient; features are differentiable.
SparseVoxelSet voxelize_means(Tape& tape, const std::vector<real>& mean_values,
                              const Tensor& features, double voxel_size);

// Submanifold 3^3 convolution: out(v) = bias + sum_offset K[offset] applied
// to feat(v+offset) over occupied neighbors only.
Tensor sparse_conv3d(Tape& tape, const SparseVoxelSet& svs, const Tensor& kernel,
                     const Tensor& bias);

// Per-gaussian gather of its cell's row.
Tensor gather_cells(Tape& tape, const Tensor& cell_features, const std::vector<std::uint32_t>& assign);

// Q = fuser_mlp(concat(features)) + sparse-conv context over voxelized means.
Tensor fuse(Tape& tape, const std::vector<Tensor>& modality_features,
            const std::vector<real>& mean_values, const FusionParams& params);

}  // namespace gocc
