#pragma once

#include <string>

#include "gocc/core.hpp"
#include "gocc/nn.hpp"

namespace gocc {

// Grid files ("GVOX"): little-endian, magic, u32 version, 3xu32 dims,
// f32 min_corner[3], f32 voxel_size, u8 payload kind, payload row-major with
// x fastest. Kinds: 0 = labels u16, 1 = occupancy f32,
// 2 = occupancy + class_probs f32 (class count inferred from the payload size).
enum class GridPayload : std::uint8_t { labels = 0, occupancy = 1, occupancy_probs = 2 };

void save_grid(const std::string& path, const SemanticGrid& grid, GridPayload kind);
SemanticGrid load_grid(const std::string& path);

// Gaussian sets ("GOCC"): magic, u32 version, u32 P, u32 C, u32 D, then f32
// payload in field order (per gaussian: mean, scale, rotation, opacity,
// logits; then queries row-major).
void save_gaussians(const std::string& path, const GaussianSet& set, std::size_t num_classes);
GaussianSet load_gaussians(const std::string& path);

// JSON twin of the gaussian-set format.
std::string gaussians_to_json(const GaussianSet& set, std::size_t num_classes);
GaussianSet gaussians_from_json(const std::string& text);

// Checkpoints ("GFWT"): magic, u32 version, u32 count, then per tensor:
// u32 name length + bytes, u32 rank, u32 dims, f32 data.
struct NamedTensorFile {
  std::vector<std::pair<std::string, Tensor>> tensors;
};
void save_checkpoint(const std::string& path, const NamedTensorFile& file);
NamedTensorFile load_checkpoint(const std::string& path);

// Point clouds ("GPTS"): magic, u32 version, u32 K, f32 xyz * K, u16 class * K.
void save_points(const std::string& path, const std::vector<Vec3>& points,
                 const std::vector<std::uint16_t>& classes);
void load_points(const std::string& path, std::vector<Vec3>& points,
                 std::vector<std::uint16_t>& classes);

// Raw f32 blob for one pyramid level, shape (C, H, W).
void save_feature_blob(const std::string& path, const Tensor& level);
Tensor load_feature_blob(const std::string& path, std::size_t c, std::size_t h, std::size_t w);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace gocc
