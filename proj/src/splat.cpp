#include "gocc/splat.hpp"

#include <cmath>

namespace gocc {

namespace {

constexpr double kWeightCap = 1.0 - 1e-7;  // keeps log1p(-w) finite

struct GaussianFrame {
  Vec3 mean;
  Mat3 rot;          // R
  Vec3 inv_sq;       // 1/s^2
  Vec3 scale;
  double opacity;
};

GaussianFrame make_frame(const SemanticGaussian& g) {
  GaussianFrame f;
  f.mean = g.mean;
  f.rot = quat_to_rotmat(g.rotation / g.rotation.norm());
  f.scale = g.scale;
  f.inv_sq = g.scale.array().square().inverse().matrix();
  f.opacity = g.opacity;
  return f;
}

CullBox box_for(const GaussianFrame& f, const GridSpec& spec, double cutoff) {
  Vec3 extent;
  for (int k = 0; k < 3; ++k) {
    double sigma_kk = 0;
    for (int j = 0; j < 3; ++j) sigma_kk += f.rot(k, j) * f.rot(k, j) * f.scale[j] * f.scale[j];
    extent[k] = cutoff * std::sqrt(sigma_kk);
  }
  CullBox box;
  for (int k = 0; k < 3; ++k) {
    const double lo_t = (f.mean[k] - extent[k] - spec.min_corner[k]) / spec.voxel_size - 0.5;
    const double hi_t = (f.mean[k] + extent[k] - spec.min_corner[k]) / spec.voxel_size - 0.5;
    const long lo = long(std::ceil(lo_t));
    const long hi = long(std::floor(hi_t));
    box.lo[k] = int(std::max<long>(0, lo));
    box.hi[k] = int(std::min<long>(spec.dims[k] - 1, hi));
    if (box.lo[k] > box.hi[k]) return CullBox{};  // default-constructed box is empty
  }
  return box;
}

std::vector<double> softmax_row(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> s(logits.size());
  double z = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    s[k] = std::exp(logits[k] - mx);
    z += s[k];
  }
  for (auto& v : s) v /= z;
  return s;
}

// z-slab decomposition; slabs are contiguous, disjoint output ranges.
struct Slabs {
  int count, height;
};
Slabs make_slabs(const GridSpec& spec) {
  const int nz = spec.dims[2];
  const int workers = int(std::max<unsigned>(1, std::thread::hardware_concurrency()));
  const int count = std::min(nz, workers * 4);
  return {count, (nz + count - 1) / count};
}

}  // namespace

CullList cull(const std::vector<SemanticGaussian>& gaussians, const GridSpec& spec,
              const SplatConfig& cfg) {
  cfg.validate();
  spec.validate();
  CullList list;
  list.boxes.resize(gaussians.size());
  parallel_for(gaussians.size(), [&](std::size_t i) {
    list.boxes[i] = box_for(make_frame(gaussians[i]), spec, cfg.cutoff_sigma);
  });
  return list;
}

SplatResult splat_fields(const std::vector<SemanticGaussian>& gaussians, const GridSpec& spec,
                         const SplatConfig& cfg, bool semantics, const CullList* cull_override) {
  cfg.validate();
  spec.validate();
  const std::size_t v = spec.voxel_count();
  const std::size_t p = gaussians.size();
  const std::size_t c = p ? gaussians[0].logits.size() : 0;

  SplatResult out;
  out.log_transmit.assign(v, real(0));
  out.occupancy.assign(v, real(0));
  out.num_classes = c;
  if (semantics) {
    require(c > 0, "splat semantics requires gaussians with logits");
    out.weight_sum.assign(v, real(0));
    out.class_probs.assign(v * c, real(0));
  }

  CullList local;
  if (!cull_override) {
    local = cull(gaussians, spec, cfg);
    cull_override = &local;
  }
  require(cull_override->boxes.size() == p, "cull list size does not match gaussian count");

  std::vector<GaussianFrame> frames(p);
  std::vector<std::vector<double>> smx(semantics ? p : 0);
  for (std::size_t i = 0; i < p; ++i) {
    frames[i] = make_frame(gaussians[i]);
    if (semantics) smx[i] = softmax_row(gaussians[i].logits);
  }

  const Slabs slabs = make_slabs(spec);
  const int nx = spec.dims[0], ny = spec.dims[1], nz = spec.dims[2];

  // Per-slab gaussian lists so each worker touches a disjoint z range.
  std::vector<std::vector<std::uint32_t>> per_slab(slabs.count);
  for (std::size_t i = 0; i < p; ++i) {
    const CullBox& b = cull_override->boxes[i];
    if (b.empty()) continue;
    for (int s = b.lo[2] / slabs.height; s <= b.hi[2] / slabs.height; ++s) {
      per_slab[s].push_back(std::uint32_t(i));
    }
  }

  parallel_for(std::size_t(slabs.count), [&](std::size_t slab) {
    const int z0 = int(slab) * slabs.height;
    const int z1 = std::min(nz, z0 + slabs.height);
    for (std::uint32_t gi : per_slab[slab]) {
      const CullBox& b = cull_override->boxes[gi];
      const GaussianFrame& f = frames[gi];
      const double* sm = semantics ? smx[gi].data() : nullptr;
      for (int z = std::max(z0, b.lo[2]); z <= std::min(z1 - 1, b.hi[2]); ++z) {
        for (int y = b.lo[1]; y <= b.hi[1]; ++y) {
          std::size_t row = (std::size_t(z) * ny + y) * nx;
          for (int x = b.lo[0]; x <= b.hi[0]; ++x) {
            const Vec3 center = spec.min_corner +
                                spec.voxel_size * (Vec3(x, y, z) + Vec3(0.5, 0.5, 0.5));
            const Vec3 u = f.rot.transpose() * (center - f.mean);
            const double q = u[0] * u[0] * f.inv_sq[0] + u[1] * u[1] * f.inv_sq[1] +
                             u[2] * u[2] * f.inv_sq[2];
            if (q > 1400.0) continue;  // exp underflows to 0 well before this
            const double w = std::min(f.opacity * std::exp(-0.5 * q), kWeightCap);
            const std::size_t vi = row + x;
            out.log_transmit[vi] += real(std::log1p(-w));
            if (semantics) {
              out.weight_sum[vi] += real(w);
              real* cp = out.class_probs.data() + vi * c;
              for (std::size_t k = 0; k < c; ++k) cp[k] += real(w * sm[k]);
            }
          }
        }
      }
    }
  }, 1);

  parallel_for(v, [&](std::size_t vi) {
    out.occupancy[vi] = real(-std::expm1(double(out.log_transmit[vi])));
    if (semantics) {
      const real z = out.weight_sum[vi] + real(cfg.eps);
      real* cp = out.class_probs.data() + vi * c;
      for (std::size_t k = 0; k < c; ++k) cp[k] /= z;
    }
  }, 4096);
  return out;
}

std::vector<real> splat_occupancy(const std::vector<SemanticGaussian>& gaussians,
                                  const GridSpec& spec, const SplatConfig& cfg) {
  return splat_fields(gaussians, spec, cfg, false).occupancy;
}

std::vector<std::uint16_t> labels_from_fields(const SplatResult& fields, const SplatConfig& cfg) {
  const std::size_t v = fields.occupancy.size();
  const std::size_t c = fields.num_classes;
  require(fields.class_probs.size() == v * c, "labels_from_fields needs semantic fields");
  std::vector<std::uint16_t> labels(v, 0);
  parallel_for(v, [&](std::size_t vi) {
    if (double(fields.occupancy[vi]) < cfg.occupancy_threshold) return;
    const real* cp = fields.class_probs.data() + vi * c;
    std::size_t best = 1;
    for (std::size_t k = 2; k < c; ++k) {
      if (cp[k] > cp[best]) best = k;
    }
    labels[vi] = std::uint16_t(best);
  }, 4096);
  return labels;
}

SemanticGrid splat_semantics(const std::vector<SemanticGaussian>& gaussians, const GridSpec& spec,
                             const SplatConfig& cfg) {
  SplatResult fields = splat_fields(gaussians, spec, cfg, true);
  SemanticGrid grid;
  grid.spec = spec;
  grid.num_classes = fields.num_classes;
  grid.labels = labels_from_fields(fields, cfg);
  grid.occupancy = std::move(fields.occupancy);
  grid.class_probs = std::move(fields.class_probs);
  return grid;
}

SplatGrads splat_backward(const std::vector<SemanticGaussian>& gaussians, const GridSpec& spec,
                          const SplatConfig& cfg, const SplatResult& fields,
                          const std::vector<real>& occupancy_grad,
                          const std::vector<real>& class_probs_grad,
                          const CullList* cull_override) {
  const std::size_t p = gaussians.size();
  const std::size_t v = spec.voxel_count();
  const std::size_t c = fields.num_classes;
  const bool want_occ = !occupancy_grad.empty();
  const bool want_sem = !class_probs_grad.empty();
  require(!want_occ || occupancy_grad.size() == v, "occupancy_grad size mismatch");
  require(!want_sem || class_probs_grad.size() == v * c, "class_probs_grad size mismatch");
  require(!want_sem || fields.class_probs.size() == v * c,
          "semantic backward needs a semantic forward");

  SplatGrads grads;
  grads.mean.assign(p * 3, 0.0);
  grads.scale.assign(p * 3, 0.0);
  grads.rotation.assign(p * 4, 0.0);
  grads.opacity.assign(p, 0.0);
  grads.logits.assign(p * c, 0.0);

  CullList local;
  if (!cull_override) {
    local = cull(gaussians, spec, cfg);
    cull_override = &local;
  }

  const int nx = spec.dims[0], ny = spec.dims[1];

  parallel_for(p, [&](std::size_t gi) {
    const CullBox& b = cull_override->boxes[gi];
    if (b.empty()) return;
    const SemanticGaussian& g = gaussians[gi];
    const GaussianFrame f = make_frame(g);
    std::vector<double> sm;
    if (want_sem) sm = softmax_row(g.logits);

    Vec3 d_mean = Vec3::Zero(), d_scale = Vec3::Zero();
    Mat3 d_rot = Mat3::Zero();
    double d_opacity = 0.0;
    std::vector<double> d_smx(want_sem ? c : 0, 0.0);

    for (int z = b.lo[2]; z <= b.hi[2]; ++z) {
      for (int y = b.lo[1]; y <= b.hi[1]; ++y) {
        const std::size_t row = (std::size_t(z) * ny + y) * nx;
        for (int x = b.lo[0]; x <= b.hi[0]; ++x) {
          const std::size_t vi = row + x;
          const Vec3 center = spec.min_corner +
                              spec.voxel_size * (Vec3(x, y, z) + Vec3(0.5, 0.5, 0.5));
          const Vec3 diff = center - f.mean;
          const Vec3 u = f.rot.transpose() * diff;
          const double q = u[0] * u[0] * f.inv_sq[0] + u[1] * u[1] * f.inv_sq[1] +
                           u[2] * u[2] * f.inv_sq[2];
          if (q > 1400.0) continue;
          const double dens = std::exp(-0.5 * q);
          const double w_raw = f.opacity * dens;
          const bool capped = w_raw > kWeightCap;
          const double w = capped ? kWeightCap : w_raw;

          double dw = 0.0;
          if (want_occ) {
            const double go = double(occupancy_grad[vi]);
            if (go != 0.0) {
              // alpha = 1 - exp(L); d alpha / d w_i = exp(L) / (1 - w_i)
              dw += go * std::exp(double(fields.log_transmit[vi])) / (1.0 - w);
            }
          }
          if (want_sem) {
            const double zden = double(fields.weight_sum[vi]) + cfg.eps;
            const real* gp = class_probs_grad.data() + vi * c;
            const real* pk = fields.class_probs.data() + vi * c;
            for (std::size_t k = 0; k < c; ++k) {
              const double gpk = double(gp[k]);
              if (gpk == 0.0) continue;
              dw += gpk * (sm[k] - double(pk[k])) / zden;
              d_smx[k] += gpk * w / zden;
            }
          }
          if (dw == 0.0 || capped) continue;

          d_opacity += dw * dens;
          const double d_dens = dw * f.opacity;
          const double dq = -0.5 * dens * d_dens;
          // q = sum_k u_k^2 / s_k^2
          const Vec3 du(2.0 * u[0] * f.inv_sq[0] * dq, 2.0 * u[1] * f.inv_sq[1] * dq,
                        2.0 * u[2] * f.inv_sq[2] * dq);
          for (int k = 0; k < 3; ++k) {
            d_scale[k] += dq * (-2.0 * u[k] * u[k] * f.inv_sq[k] / f.scale[k]);
          }
          const Vec3 dd = f.rot * du;   // u = R^T d
          d_mean -= dd;
          d_rot += diff * du.transpose();
        }
      }
    }

    for (int k = 0; k < 3; ++k) {
      grads.mean[gi * 3 + k] = d_mean[k];
      grads.scale[gi * 3 + k] = d_scale[k];
    }
    grads.opacity[gi] = d_opacity;

    const Vec4 dq_tan = quat_grad_project(g.rotation, d_rot);
    for (int j = 0; j < 4; ++j) grads.rotation[gi * 4 + j] = dq_tan[j];

    if (want_sem) {
      // softmax vjp: dlogit_k = s_k (d_smx_k - sum_j d_smx_j s_j)
      double dot = 0.0;
      for (std::size_t k = 0; k < c; ++k) dot += d_smx[k] * sm[k];
      for (std::size_t k = 0; k < c; ++k) grads.logits[gi * c + k] = sm[k] * (d_smx[k] - dot);
    }
  }, 1);

  return grads;
}

SplatTensors splat_op(Tape& tape, const Tensor& means, const Tensor& scales, const Tensor& rots,
                      const Tensor& opacities, const Tensor& logits, const GridSpec& spec,
                      const SplatConfig& cfg) {
  const std::size_t p = means.dim(0);
  require(means.rank() == 2 && means.dim(1) == 3, "splat_op: means must be (P,3)");
  require(scales.shape() == Shape{p, 3}, "splat_op: scales must be (P,3)");
  require(rots.shape() == Shape{p, 4}, "splat_op: rotations must be (P,4)");
  require(opacities.size() == p, "splat_op: opacities must have P entries");
  require(logits.rank() == 2 && logits.dim(0) == p, "splat_op: logits must be (P,C)");
  const std::size_t c = logits.dim(1);

  std::vector<SemanticGaussian> gs(p);
  for (std::size_t i = 0; i < p; ++i) {
    auto& g = gs[i];
    for (int k = 0; k < 3; ++k) {
      g.mean[k] = double(means.values()[i * 3 + k]);
      g.scale[k] = double(scales.values()[i * 3 + k]);
    }
    require(g.scale.minCoeff() > 0.0, "splat_op: scales must be strictly positive");
    for (int k = 0; k < 4; ++k) g.rotation[k] = double(rots.values()[i * 4 + k]);
    require(g.rotation.norm() > 1e-8, "splat_op: quaternion norm too small");
    g.rotation /= g.rotation.norm();
    g.opacity = std::min(1.0, std::max(0.0, double(opacities.values()[i])));
    g.logits.assign(logits.values().begin() + i * c, logits.values().begin() + (i + 1) * c);
  }

  auto fields = std::make_shared<SplatResult>(splat_fields(gs, spec, cfg, true));
  SplatTensors out;
  out.occupancy = Tensor::from({fields->occupancy.size()}, fields->occupancy);
  out.class_probs = Tensor::from({fields->occupancy.size(), c}, fields->class_probs);
  const bool rg = means.requires_grad() || scales.requires_grad() || rots.requires_grad() ||
                  opacities.requires_grad() || logits.requires_grad();
  out.occupancy.set_requires_grad(rg);
  out.class_probs.set_requires_grad(rg);

  if (tape.recording() && rg) {
    Tensor tm = means, ts = scales, tr = rots, ta = opacities, tl = logits;
    Tensor occ = out.occupancy, cp = out.class_probs;
    auto shared_gs = std::make_shared<std::vector<SemanticGaussian>>(std::move(gs));
    tape.record("splat", [tm, ts, tr, ta, tl, occ, cp, shared_gs, fields, spec, cfg]() mutable {
      static const std::vector<real> kEmpty;
      SplatGrads sg = splat_backward(*shared_gs, spec, cfg, *fields,
                                     occ.has_grad() ? occ.grad() : kEmpty,
                                     cp.has_grad() ? cp.grad() : kEmpty);
      const std::size_t p = shared_gs->size();
      const std::size_t c = (*shared_gs)[0].logits.size();
      if (tm.requires_grad()) {
        auto& g = tm.grad();
        for (std::size_t i = 0; i < p * 3; ++i) g[i] += real(sg.mean[i]);
      }
      if (ts.requires_grad()) {
        auto& g = ts.grad();
        for (std::size_t i = 0; i < p * 3; ++i) g[i] += real(sg.scale[i]);
      }
      if (tr.requires_grad()) {
        auto& g = tr.grad();
        for (std::size_t i = 0; i < p * 4; ++i) g[i] += real(sg.rotation[i]);
      }
      if (ta.requires_grad()) {
        auto& g = ta.grad();
        for (std::size_t i = 0; i < p; ++i) g[i] += real(sg.opacity[i]);
      }
      if (tl.requires_grad()) {
        auto& g = tl.grad();
        for (std::size_t i = 0; i < p * c; ++i) g[i] += real(sg.logits[i]);
      }
    });
  }
  return out;
}

}  // namespace gocc
