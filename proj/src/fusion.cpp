#include "gocc/fusion.hpp"

#include <cmath>
#include <unordered_map>

namespace gocc {

namespace {

struct CellKey {
  int x, y, z;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::size_t seed = 0;
    for (int v : {k.x, k.y, k.z}) {
      seed ^= std::size_t(std::uint32_t(v)) + 0x9e3779b9u + (seed << 6) + (seed >> 2);
    }
    return seed;
  }
};

}  // namespace

FusionParams make_fusion_params(std::size_t n_modalities, std::size_t d, Rng& rng,
                                double fusion_voxel_size) {
  FusionParams p;
  p.fuser_mlp = make_mlp({n_modalities * d, d, d}, rng);
  std::vector<real> k(27 * d * d);
  const real sd = real(1) / std::sqrt(real(27 * d));
  for (auto& v : k) v = real(rng.normal()) * sd;
  p.sc_kernel = Tensor::from({27, d, d}, std::move(k), true);
  p.sc_bias = Tensor::zeros({d}, true);
  p.fusion_voxel_size = fusion_voxel_size;
  return p;
}

Tensor concat_modalities(Tape& tape, const std::vector<Tensor>& features) {
  require(!features.empty(), "concat_modalities: no modality features");
  const std::size_t p = features[0].dim(0);
  const std::size_t d = features[0].dim(1);
  for (const auto& f : features) {
    if (f.dim(0) != p || f.dim(1) != d) {
      fail("concat_modalities: mismatched feature shape " + shape_str(f.shape()) +
           " (expected " + shape_str(features[0].shape()) + ")");
    }
  }
  if (features.size() == 1) return features[0];
  return ops::concat(tape, features, 1);
}

SparseVoxelSet voxelize_means(Tape& tape, const std::vector<real>& mean_values,
                              const Tensor& features, double voxel_size) {
  require(voxel_size > 0.0, "voxelize_means: voxel size must be positive");
  const std::size_t p = features.dim(0);
  require(mean_values.size() == p * 3, "voxelize_means: means must be (P,3)");
  const std::size_t d = features.dim(1);

  SparseVoxelSet svs;
  svs.assign.resize(p);
  std::unordered_map<CellKey, std::uint32_t, CellHash> index;
  index.reserve(p * 2);
  for (std::size_t i = 0; i < p; ++i) {
    CellKey key{int(std::floor(double(mean_values[i * 3 + 0]) / voxel_size)),
                int(std::floor(double(mean_values[i * 3 + 1]) / voxel_size)),
                int(std::floor(double(mean_values[i * 3 + 2]) / voxel_size))};
    auto [it, fresh] = index.emplace(key, std::uint32_t(svs.coords.size()));
    if (fresh) svs.coords.emplace_back(key.x, key.y, key.z);
    svs.assign[i] = it->second;
  }

  const std::size_t cells = svs.coords.size();
  std::vector<std::uint32_t> counts(cells, 0);
  for (std::uint32_t a : svs.assign) counts[a]++;

  Tensor cell_feat = Tensor::zeros({cells, d});
  cell_feat.set_requires_grad(features.requires_grad());
  for (std::size_t i = 0; i < p; ++i) {
    const real* src = features.values().data() + i * d;
    real* dst = cell_feat.values().data() + svs.assign[i] * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  for (std::size_t cell = 0; cell < cells; ++cell) {
    real* dst = cell_feat.values().data() + cell * d;
    for (std::size_t c = 0; c < d; ++c) dst[c] /= real(counts[cell]);
  }

  if (tape.recording() && features.requires_grad()) {
    Tensor tf = features, tc = cell_feat;
    auto assign = svs.assign;
    auto cnts = counts;
    tape.record("voxelize_means", [tf, tc, assign, cnts, p, d]() mutable {
      const auto& g = tc.grad();
      auto& gf = tf.grad();
      for (std::size_t i = 0; i < p; ++i) {
        const real inv = real(1) / real(cnts[assign[i]]);
        const real* src = g.data() + assign[i] * d;
        real* dst = gf.data() + i * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c] * inv;
      }
    });
  }
  svs.features = cell_feat;
  return svs;
}

Tensor sparse_conv3d(Tape& tape, const SparseVoxelSet& svs, const Tensor& kernel,
                     const Tensor& bias) {
  const std::size_t cells = svs.coords.size();
  const std::size_t d = svs.features.dim(1);
  require(kernel.rank() == 3 && kernel.dim(0) == 27 && kernel.dim(1) == d && kernel.dim(2) == d,
          "sparse_conv3d: kernel must be (27, D, D)");
  require(bias.size() == d, "sparse_conv3d: bias must be (D)");

  std::unordered_map<CellKey, std::uint32_t, CellHash> index;
  index.reserve(cells * 2);
  for (std::size_t i = 0; i < cells; ++i) {
    index.emplace(CellKey{svs.coords[i][0], svs.coords[i][1], svs.coords[i][2]},
                  std::uint32_t(i));
  }

  // neighbor table: for each cell, the occupied cell at each of the 27 offsets
  std::vector<std::int32_t> neighbor(cells * 27, -1);
  for (std::size_t i = 0; i < cells; ++i) {
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int oi = ((dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1);
          auto it = index.find(CellKey{svs.coords[i][0] + dx, svs.coords[i][1] + dy,
                                       svs.coords[i][2] + dz});
          if (it != index.end()) neighbor[i * 27 + oi] = std::int32_t(it->second);
        }
  }

  Tensor out = Tensor::zeros({cells, d});
  out.set_requires_grad(svs.features.requires_grad() || kernel.requires_grad() ||
                        bias.requires_grad());
  const auto& feat = svs.features.values();
  const auto& kv = kernel.values();
  for (std::size_t i = 0; i < cells; ++i) {
    real* o = out.values().data() + i * d;
    for (std::size_t c = 0; c < d; ++c) o[c] = bias.values()[c];
    for (int oi = 0; oi < 27; ++oi) {
      const std::int32_t n = neighbor[i * 27 + oi];
      if (n < 0) continue;
      const real* fv = feat.data() + std::size_t(n) * d;
      const real* km = kv.data() + std::size_t(oi) * d * d;
      for (std::size_t ci = 0; ci < d; ++ci) {
        const real f = fv[ci];
        if (f == real(0)) continue;
        const real* krow = km + ci * d;
        for (std::size_t co = 0; co < d; ++co) o[co] += f * krow[co];
      }
    }
  }

  if (tape.recording() && out.requires_grad()) {
    Tensor tf = svs.features, tk = kernel, tb = bias, tout = out;
    auto nb = neighbor;
    tape.record("sparse_conv3d", [tf, tk, tb, tout, nb, cells, d]() mutable {
      const auto& g = tout.grad();
      for (std::size_t i = 0; i < cells; ++i) {
        const real* go = g.data() + i * d;
        if (tb.requires_grad()) {
          auto& gb = tb.grad();
          for (std::size_t c = 0; c < d; ++c) gb[c] += go[c];
        }
        for (int oi = 0; oi < 27; ++oi) {
          const std::int32_t n = nb[i * 27 + oi];
          if (n < 0) continue;
          const real* fv = tf.values().data() + std::size_t(n) * d;
          const real* km = tk.values().data() + std::size_t(oi) * d * d;
          if (tf.requires_grad()) {
            real* gf = tf.grad().data() + std::size_t(n) * d;
            for (std::size_t ci = 0; ci < d; ++ci) {
              real acc = 0;
              const real* krow = km + ci * d;
              for (std::size_t co = 0; co < d; ++co) acc += krow[co] * go[co];
              gf[ci] += acc;
            }
          }
          if (tk.requires_grad()) {
            real* gk = tk.grad().data() + std::size_t(oi) * d * d;
            for (std::size_t ci = 0; ci < d; ++ci) {
              const real f = fv[ci];
              if (f == real(0)) continue;
              real* gkrow = gk + ci * d;
              for (std::size_t co = 0; co < d; ++co) gkrow[co] += f * go[co];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor gather_cells(Tape& tape, const Tensor& cell_features, const std::vector<std::uint32_t>& assign) {
  const std::size_t p = assign.size();
  const std::size_t d = cell_features.dim(1);
  Tensor out = Tensor::zeros({p, d});
  out.set_requires_grad(cell_features.requires_grad());
  for (std::size_t i = 0; i < p; ++i) {
    const real* src = cell_features.values().data() + assign[i] * d;
    std::copy(src, src + d, out.values().data() + i * d);
  }
  if (tape.recording() && cell_features.requires_grad()) {
    Tensor tc = cell_features, tout = out;
    auto as = assign;
    tape.record("gather_cells", [tc, tout, as, p, d]() mutable {
      const auto& g = tout.grad();
      auto& gc = tc.grad();
      for (std::size_t i = 0; i < p; ++i) {
        const real* src = g.data() + i * d;
        real* dst = gc.data() + as[i] * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      }
    });
  }
  return out;
}

Tensor fuse(Tape& tape, const std::vector<Tensor>& modality_features,
            const std::vector<real>& mean_values, const FusionParams& params) {
  Tensor cat = concat_modalities(tape, modality_features);
  Tensor mlp_out = mlp_forward(tape, params.fuser_mlp, cat);
  SparseVoxelSet svs = voxelize_means(tape, mean_values, mlp_out, params.fusion_voxel_size);
  Tensor cell_out = sparse_conv3d(tape, svs, params.sc_kernel, params.sc_bias);
  Tensor context = gather_cells(tape, cell_out, svs.assign);
  return ops::add(tape, mlp_out, context);
}

}  // namespace gocc
