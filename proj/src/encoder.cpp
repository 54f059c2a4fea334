#include "gocc/encoder.hpp"

#include <cmath>

namespace gocc {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::camera: return "camera";
    case Modality::lidar_bev: return "lidar_bev";
    case Modality::radar_bev: return "radar_bev";
  }
  return "?";
}

std::optional<Modality> modality_from_name(const std::string& name) {
  if (name == "camera") return Modality::camera;
  if (name == "lidar_bev") return Modality::lidar_bev;
  if (name == "radar_bev") return Modality::radar_bev;
  return std::nullopt;
}

void SensorModel::validate() const {
  require(height >= 1 && width >= 1, "sensor map dims must be positive");
  if (kind == Kind::camera) {
    require(std::abs(intrinsics.determinant()) > 1e-12, "camera intrinsics must be invertible");
    const Mat3 r = extrinsics.topLeftCorner<3, 3>();
    require((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9,
            "camera extrinsics rotation must be orthonormal");
    require(std::abs(r.determinant() - 1.0) < 1e-9, "camera extrinsics must be a proper rotation");
  } else {
    require(bev_max[0] > bev_min[0] && bev_max[1] > bev_min[1],
            "bev extent must have positive area");
  }
}

std::optional<Eigen::Vector2d> project(const SensorModel& sensor, const Vec3& p) {
  if (sensor.kind == SensorModel::Kind::camera) {
    const Vec3 xs = sensor.extrinsics.topLeftCorner<3, 3>() * p +
                    sensor.extrinsics.topRightCorner<3, 1>();
    if (xs[2] <= kCameraNearPlane) return std::nullopt;
    const Vec3 pix = sensor.intrinsics * (xs / xs[2]);
    const Eigen::Vector2d uv(pix[0] / sensor.width, pix[1] / sensor.height);
    if (uv[0] < 0.0 || uv[0] > 1.0 || uv[1] < 0.0 || uv[1] > 1.0) return std::nullopt;
    return uv;
  }
  const Eigen::Vector2d uv((p[0] - sensor.bev_min[0]) / (sensor.bev_max[0] - sensor.bev_min[0]),
                           (p[1] - sensor.bev_min[1]) / (sensor.bev_max[1] - sensor.bev_min[1]));
  if (uv[0] < 0.0 || uv[0] > 1.0 || uv[1] < 0.0 || uv[1] > 1.0) return std::nullopt;
  return uv;
}

void FeaturePyramid::validate() const {
  sensor.validate();
  require(!levels.empty(), "feature pyramid needs at least one level");
  const std::size_t cf = levels[0].dim(0);
  std::size_t h = levels[0].dim(1), w = levels[0].dim(2);
  require(int(h) == sensor.height && int(w) == sensor.width,
          "pyramid level 0 must match the sensor dims");
  for (std::size_t l = 1; l < levels.size(); ++l) {
    require(levels[l].dim(0) == cf, "pyramid levels must share channel count");
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    require(levels[l].dim(1) == h && levels[l].dim(2) == w, "pyramid levels must halve per level");
  }
}

EncoderParams make_encoder_params(std::size_t d, std::size_t cf, std::size_t n_ref,
                                  std::size_t samples, std::size_t levels, Rng& rng) {
  require(n_ref >= 1 && samples >= 1 && levels >= 1, "encoder params need N_R, S_p, M >= 1");
  EncoderParams p;
  p.num_ref_points = n_ref;
  p.samples_per_point = samples;
  p.num_levels = levels;
  p.offset_mlp = make_mlp({d, 3 * n_ref}, rng);
  const std::size_t head = levels * samples * 3;
  std::vector<real> w(d * head);
  const real sd = real(1) / std::sqrt(real(d));
  for (auto& v : w) v = real(rng.normal()) * sd;
  p.attn_weight = Tensor::from({d, head}, std::move(w), true);
  p.attn_bias = Tensor::zeros({head}, true);
  std::vector<real> vp(cf * d);
  const real sd2 = real(1) / std::sqrt(real(cf));
  for (auto& v : vp) v = real(rng.normal()) * sd2;
  p.value_proj = Tensor::from({cf, d}, std::move(vp), true);
  return p;
}

Tensor reference_points_op(Tape& tape, const Tensor& means, const Tensor& scales,
                           const Tensor& rotations, const Tensor& offsets) {
  const std::size_t p = means.dim(0);
  require(offsets.rank() == 2 && offsets.dim(0) == p && offsets.dim(1) % 3 == 0,
          "reference_points: offsets must be (P, 3*N_R)");
  const std::size_t n_ref = offsets.dim(1) / 3;
  Tensor out = Tensor::zeros({p * n_ref, 3});
  const bool rg = means.requires_grad() || scales.requires_grad() || rotations.requires_grad() ||
                  offsets.requires_grad();
  out.set_requires_grad(rg);

  for (std::size_t i = 0; i < p; ++i) {
    Vec4 q;
    for (int k = 0; k < 4; ++k) q[k] = double(rotations.values()[i * 4 + k]);
    require(q.norm() > 1e-8, "reference_points: quaternion norm too small");
    const Mat3 r = quat_to_rotmat(q / q.norm());
    const Vec3 m(means.values()[i * 3], means.values()[i * 3 + 1], means.values()[i * 3 + 2]);
    const Vec3 s(scales.values()[i * 3], scales.values()[i * 3 + 1], scales.values()[i * 3 + 2]);
    for (std::size_t rp = 0; rp < n_ref; ++rp) {
      Vec3 o;
      for (int k = 0; k < 3; ++k) o[k] = double(offsets.values()[i * offsets.dim(1) + rp * 3 + k]);
      const Vec3 pt = m + r * (s.cwiseProduct(o));
      for (int k = 0; k < 3; ++k) out.values()[(i * n_ref + rp) * 3 + k] = real(pt[k]);
    }
  }

  if (tape.recording() && rg) {
    Tensor tm = means, ts = scales, tr = rotations, to = offsets, tout = out;
    tape.record("reference_points", [tm, ts, tr, to, tout, p, n_ref]() mutable {
      const auto& g = tout.grad();
      const std::size_t ocols = to.shape()[1];
      for (std::size_t i = 0; i < p; ++i) {
        Vec4 q;
        for (int k = 0; k < 4; ++k) q[k] = double(tr.values()[i * 4 + k]);
        const Mat3 r = quat_to_rotmat(q / q.norm());
        Vec3 s(ts.values()[i * 3], ts.values()[i * 3 + 1], ts.values()[i * 3 + 2]);
        Vec3 dm = Vec3::Zero(), dscale = Vec3::Zero();
        Mat3 drot = Mat3::Zero();
        for (std::size_t rp = 0; rp < n_ref; ++rp) {
          const Vec3 go(g[(i * n_ref + rp) * 3], g[(i * n_ref + rp) * 3 + 1],
                        g[(i * n_ref + rp) * 3 + 2]);
          Vec3 o;
          for (int k = 0; k < 3; ++k) o[k] = double(to.values()[i * ocols + rp * 3 + k]);
          dm += go;
          const Vec3 v = r.transpose() * go;
          if (to.requires_grad()) {
            auto& god = to.grad();
            for (int k = 0; k < 3; ++k) god[i * ocols + rp * 3 + k] += real(s[k] * v[k]);
          }
          dscale += o.cwiseProduct(v);
          drot += go * (s.cwiseProduct(o)).transpose();
        }
        if (tm.requires_grad()) {
          auto& gm = tm.grad();
          for (int k = 0; k < 3; ++k) gm[i * 3 + k] += real(dm[k]);
        }
        if (ts.requires_grad()) {
          auto& gs = ts.grad();
          for (int k = 0; k < 3; ++k) gs[i * 3 + k] += real(dscale[k]);
        }
        if (tr.requires_grad()) {
          const Vec4 dq = quat_grad_project(q, drot);
          auto& gr = tr.grad();
          for (int k = 0; k < 4; ++k) gr[i * 4 + k] += real(dq[k]);
        }
      }
    });
  }
  return out;
}

std::vector<Vec3> gen_reference_points(const SemanticGaussian& g, const std::vector<real>& query,
                                       const EncoderParams& params) {
  Tape tape;
  NoGradGuard ng(tape);
  Tensor q = Tensor::from({1, query.size()}, query);
  Tensor offsets = mlp_forward(tape, params.offset_mlp, q);
  Tensor means = Tensor::from({1, 3}, {real(g.mean[0]), real(g.mean[1]), real(g.mean[2])});
  Tensor scales = Tensor::from({1, 3}, {real(g.scale[0]), real(g.scale[1]), real(g.scale[2])});
  Tensor rots = Tensor::from({1, 4}, {real(g.rotation[0]), real(g.rotation[1]),
                                      real(g.rotation[2]), real(g.rotation[3])});
  Tensor pts = reference_points_op(tape, means, scales, rots, offsets);
  std::vector<Vec3> out(params.num_ref_points);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = Vec3(pts.values()[i * 3], pts.values()[i * 3 + 1], pts.values()[i * 3 + 2]);
  }
  return out;
}

ProjectedPoints project_points_op(Tape& tape, const SensorModel& sensor, const Tensor& points) {
  require(points.rank() == 2 && points.dim(1) == 3, "project_points: points must be (K,3)");
  const std::size_t k = points.dim(0);
  ProjectedPoints out;
  out.uv = Tensor::zeros({k, 2});
  out.uv.set_requires_grad(points.requires_grad());
  out.visible.assign(k, 0);

  for (std::size_t i = 0; i < k; ++i) {
    const Vec3 p(points.values()[i * 3], points.values()[i * 3 + 1], points.values()[i * 3 + 2]);
    const auto uv = project(sensor, p);
    if (uv) {
      out.visible[i] = 1;
      out.uv.values()[i * 2] = real((*uv)[0]);
      out.uv.values()[i * 2 + 1] = real((*uv)[1]);
    } else {
      out.uv.values()[i * 2] = real(0.5);
      out.uv.values()[i * 2 + 1] = real(0.5);
    }
  }

  if (tape.recording() && points.requires_grad()) {
    Tensor tp = points;
    Tensor tuv = out.uv;
    auto vis = out.visible;
    tape.record("project_points", [tp, tuv, vis, sensor, k]() mutable {
      const auto& g = tuv.grad();
      auto& gp = tp.grad();
      for (std::size_t i = 0; i < k; ++i) {
        if (!vis[i]) continue;
        const double gu = double(g[i * 2]), gv = double(g[i * 2 + 1]);
        if (gu == 0.0 && gv == 0.0) continue;
        Vec3 dp = Vec3::Zero();
        if (sensor.kind == SensorModel::Kind::camera) {
          const Vec3 p(tp.values()[i * 3], tp.values()[i * 3 + 1], tp.values()[i * 3 + 2]);
          const Mat3 r = sensor.extrinsics.topLeftCorner<3, 3>();
          const Vec3 xs = r * p + sensor.extrinsics.topRightCorner<3, 1>();
          const double z = xs[2];
          // uv = K (xs/z) / dims componentwise on (u, v)
          const Vec3 dpix(gu / sensor.width, gv / sensor.height, 0.0);
          const Vec3 dn = sensor.intrinsics.transpose() * dpix;
          const Vec3 dxs(dn[0] / z, dn[1] / z, -(dn[0] * xs[0] + dn[1] * xs[1]) / (z * z));
          dp = r.transpose() * dxs;
        } else {
          dp[0] = gu / (sensor.bev_max[0] - sensor.bev_min[0]);
          dp[1] = gv / (sensor.bev_max[1] - sensor.bev_min[1]);
        }
        for (int c = 0; c < 3; ++c) gp[i * 3 + c] += real(dp[c]);
      }
    });
  }
  return out;
}

namespace {

// Per-level sampling positions uv[p,r] + offsets[p,(l,s)] / (W_l, H_l).
std::vector<Tensor> sample_positions(
    Tape& tape, const Tensor& uv, const Tensor& offsets, std::size_t n_ref, std::size_t samples,
    const std::vector<std::pair<std::size_t, std::size_t>>& level_hw) {
  const std::size_t p = offsets.dim(0);
  const std::size_t k = uv.dim(0);
  require(k == p * n_ref, "sample_positions: uv rows must equal P*N_R");
  const std::size_t m = level_hw.size();
  require(offsets.dim(1) == m * samples * 2, "sample_positions: offset width mismatch");

  const bool rg = uv.requires_grad() || offsets.requires_grad();
  std::vector<Tensor> out(m);
  for (std::size_t l = 0; l < m; ++l) {
    out[l] = Tensor::zeros({k * samples, 2});
    out[l].set_requires_grad(rg);
    const real wl = real(level_hw[l].second), hl = real(level_hw[l].first);
    for (std::size_t pi = 0; pi < p; ++pi) {
      for (std::size_t r = 0; r < n_ref; ++r) {
        const std::size_t uvrow = pi * n_ref + r;
        for (std::size_t s = 0; s < samples; ++s) {
          const std::size_t slot = l * samples + s;
          const std::size_t row = uvrow * samples + s;
          out[l].values()[row * 2] =
              uv.values()[uvrow * 2] + offsets.values()[pi * offsets.dim(1) + slot * 2] / wl;
          out[l].values()[row * 2 + 1] =
              uv.values()[uvrow * 2 + 1] + offsets.values()[pi * offsets.dim(1) + slot * 2 + 1] / hl;
        }
      }
    }
  }
  if (tape.recording() && rg) {
    Tensor tuv = uv, toff = offsets;
    std::vector<Tensor> touts = out;
    tape.record("sample_positions", [tuv, toff, touts, p, n_ref, samples, level_hw]() mutable {
      const std::size_t ocols = toff.shape()[1];
      for (std::size_t l = 0; l < touts.size(); ++l) {
        const auto& g = touts[l].grad();
        const real wl = real(level_hw[l].second), hl = real(level_hw[l].first);
        for (std::size_t pi = 0; pi < p; ++pi) {
          for (std::size_t r = 0; r < n_ref; ++r) {
            const std::size_t uvrow = pi * n_ref + r;
            for (std::size_t s = 0; s < samples; ++s) {
              const std::size_t slot = l * samples + s;
              const std::size_t row = uvrow * samples + s;
              if (tuv.requires_grad()) {
                tuv.grad()[uvrow * 2] += g[row * 2];
                tuv.grad()[uvrow * 2 + 1] += g[row * 2 + 1];
              }
              if (toff.requires_grad()) {
                toff.grad()[pi * ocols + slot * 2] += g[row * 2] / wl;
                toff.grad()[pi * ocols + slot * 2 + 1] += g[row * 2 + 1] / hl;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// out[p] = sum_r vis[p,r] * sum_{l,s} w[p, l*S_p+s] * samples_l[(p*N_R+r)*S_p+s]
Tensor attention_combine(Tape& tape, const std::vector<Tensor>& samples, const Tensor& weights,
                         const std::vector<char>& visible, std::size_t n_ref) {
  const std::size_t p = weights.dim(0);
  const std::size_t m = samples.size();
  const std::size_t slots = weights.dim(1);
  const std::size_t s_per = slots / m;
  const std::size_t cf = samples[0].dim(1);
  require(visible.size() == p * n_ref, "attention_combine: visibility mask size mismatch");

  Tensor out = Tensor::zeros({p, cf});
  bool rg = weights.requires_grad();
  for (const auto& t : samples) rg = rg || t.requires_grad();
  out.set_requires_grad(rg);

  for (std::size_t l = 0; l < m; ++l) {
    const auto& sv = samples[l].values();
    for (std::size_t pi = 0; pi < p; ++pi) {
      for (std::size_t r = 0; r < n_ref; ++r) {
        if (!visible[pi * n_ref + r]) continue;
        for (std::size_t s = 0; s < s_per; ++s) {
          const real w = weights.values()[pi * slots + l * s_per + s];
          const std::size_t row = (pi * n_ref + r) * s_per + s;
          real* o = out.values().data() + pi * cf;
          const real* src = sv.data() + row * cf;
          for (std::size_t c = 0; c < cf; ++c) o[c] += w * src[c];
        }
      }
    }
  }

  if (tape.recording() && rg) {
    std::vector<Tensor> ts = samples;
    Tensor tw = weights, tout = out;
    auto vis = visible;
    tape.record("attention_combine", [ts, tw, tout, vis, p, n_ref, s_per, cf, slots]() mutable {
      const auto& g = tout.grad();
      for (std::size_t l = 0; l < ts.size(); ++l) {
        const auto& sv = ts[l].values();
        for (std::size_t pi = 0; pi < p; ++pi) {
          const real* go = g.data() + pi * cf;
          for (std::size_t r = 0; r < n_ref; ++r) {
            if (!vis[pi * n_ref + r]) continue;
            for (std::size_t s = 0; s < s_per; ++s) {
              const std::size_t row = (pi * n_ref + r) * s_per + s;
              const real w = tw.values()[pi * slots + l * s_per + s];
              if (ts[l].requires_grad()) {
                real* gs = ts[l].grad().data() + row * cf;
                for (std::size_t c = 0; c < cf; ++c) gs[c] += w * go[c];
              }
              if (tw.requires_grad()) {
                real acc = 0;
                const real* src = sv.data() + row * cf;
                for (std::size_t c = 0; c < cf; ++c) acc += go[c] * src[c];
                tw.grad()[pi * slots + l * s_per + s] += acc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

struct AttentionHead {
  Tensor offsets;  // (P, M*S_p*2)
  Tensor weights;  // (P, M*S_p), softmax over slots
};

AttentionHead attention_head(Tape& tape, const Tensor& queries, const EncoderParams& params) {
  const std::size_t slots = params.slots();
  Tensor head = ops::add(tape, ops::matmul(tape, queries, params.attn_weight), params.attn_bias);
  AttentionHead out;
  out.offsets = ops::slice(tape, head, 1, 0, slots * 2);
  out.weights = ops::softmax(tape, ops::slice(tape, head, 1, slots * 2, slots), 1);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> pyramid_dims(const FeaturePyramid& pyr,
                                                              std::size_t m) {
  require(pyr.levels.size() == m, "pyramid level count does not match encoder params");
  std::vector<std::pair<std::size_t, std::size_t>> hw;
  for (const auto& level : pyr.levels) hw.emplace_back(level.dim(1), level.dim(2));
  return hw;
}

}  // namespace

Tensor deformable_attention(Tape& tape, const Tensor& q, const Eigen::Vector2d& uv,
                            const FeaturePyramid& pyramid, const EncoderParams& params) {
  require(q.rank() == 2 && q.dim(0) == 1, "deformable_attention: q must be (1, D)");
  AttentionHead head = attention_head(tape, q, params);
  Tensor uvt = Tensor::from({1, 2}, {real(uv[0]), real(uv[1])});
  auto positions = sample_positions(tape, uvt, head.offsets, 1, params.samples_per_point,
                                    pyramid_dims(pyramid, params.num_levels));
  std::vector<Tensor> samples;
  for (std::size_t l = 0; l < positions.size(); ++l) {
    samples.push_back(ops::bilinear_sample2d(tape, pyramid.levels[l], positions[l]));
  }
  Tensor combined = attention_combine(tape, samples, head.weights, {1}, 1);
  return ops::matmul(tape, combined, params.value_proj);
}

Tensor encode_modality(Tape& tape, const Tensor& means, const Tensor& scales,
                       const Tensor& rotations, const Tensor& queries,
                       const std::vector<FeaturePyramid>& sensors, const EncoderParams& params) {
  require(!sensors.empty(), "encode_modality: at least one sensor input required");
  const std::size_t cf = params.feature_channels();
  for (const auto& s : sensors) {
    if (s.channels() != cf) {
      fail("encode_modality: sensor channel count " + std::to_string(s.channels()) +
           " does not match encoder value projection " + std::to_string(cf));
    }
  }
  require(queries.dim(1) == params.channel_width(), "encode_modality: query width mismatch");

  AttentionHead head = attention_head(tape, queries, params);
  Tensor offsets_raw = mlp_forward(tape, params.offset_mlp, queries);
  Tensor refpts = reference_points_op(tape, means, scales, rotations, offsets_raw);

  Tensor acc;  // (P, Cf) accumulated over sensors and reference points
  for (const auto& pyr : sensors) {
    ProjectedPoints proj = project_points_op(tape, pyr.sensor, refpts);
    auto positions = sample_positions(tape, proj.uv, head.offsets, params.num_ref_points,
                                      params.samples_per_point,
                                      pyramid_dims(pyr, params.num_levels));
    std::vector<Tensor> samples;
    for (std::size_t l = 0; l < positions.size(); ++l) {
      samples.push_back(ops::bilinear_sample2d(tape, pyr.levels[l], positions[l]));
    }
    Tensor contrib =
        attention_combine(tape, samples, head.weights, proj.visible, params.num_ref_points);
    acc = acc.defined() ? ops::add(tape, acc, contrib) : contrib;
  }
  return ops::matmul(tape, acc, params.value_proj);
}

}  // namespace gocc
