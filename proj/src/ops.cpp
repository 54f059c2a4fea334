#include "gocc/ops.hpp"

#include <cmath>

namespace gocc::ops {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

bool needs_grad(const Tensor& a, const Tensor& b) { return a.requires_grad() || b.requires_grad(); }

Tensor unary_out(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  out.set_requires_grad(a.requires_grad());
  return out;
}

// Elementwise y = f(x) with dy/dx expressed from (x, y).
template <typename F, typename DF>
Tensor pointwise(Tape& tape, const char* name, const Tensor& a, F f, DF df) {
  Tensor out = unary_out(a);
  const auto& x = a.values();
  auto& y = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  if (tape.recording() && a.requires_grad()) {
    Tensor in = a;
    tape.record(name, [in, out, df]() mutable {
      const auto& g = out.grad();
      const auto& x = in.values();
      const auto& y = out.values();
      auto& gi = in.grad();
      for (std::size_t i = 0; i < x.size(); ++i) gi[i] += g[i] * df(x[i], y[i]);
    });
  }
  return out;
}

}  // namespace

AxisSplit axis_split(const Shape& shape, std::size_t axis) {
  require(axis < shape.size(), "axis out of range for shape " + shape_str(shape));
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    fail("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  out.set_requires_grad(needs_grad(a, b));
  {
    const real* pa = a.values().data();
    const real* pb = b.values().data();
    real* po = out.values().data();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t l = 0; l < k; ++l) {
        const real av = pa[i * k + l];
        if (av == real(0)) continue;
        const real* brow = pb + l * n;
        real* orow = po + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  if (tape.recording() && out.requires_grad()) {
    Tensor ta = a, tb = b;
    tape.record("matmul", [ta, tb, out, m, k, n]() mutable {
      const auto& g = out.grad();
      if (ta.requires_grad()) {
        auto& ga = ta.grad();
        const auto& vb = tb.values();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            real acc = 0;
            const real* grow = g.data() + i * n;
            const real* brow = vb.data() + l * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + l] += acc;
          }
      }
      if (tb.requires_grad()) {
        auto& gb = tb.grad();
        const auto& va = ta.values();
        for (std::size_t i = 0; i < m; ++i) {
          const real* grow = g.data() + i * n;
          for (std::size_t l = 0; l < k; ++l) {
            const real av = va[i * k + l];
            if (av == real(0)) continue;
            real* gbrow = gb.data() + l * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool row_broadcast = a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0);
  if (!row_broadcast) check_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  out.set_requires_grad(needs_grad(a, b));
  const auto& va = a.values();
  const auto& vb = b.values();
  auto& vo = out.values();
  const std::size_t n = row_broadcast ? b.dim(0) : va.size();
  for (std::size_t i = 0; i < va.size(); ++i) vo[i] = va[i] + vb[row_broadcast ? i % n : i];
  if (tape.recording() && out.requires_grad()) {
    Tensor ta = a, tb = b;
    tape.record("add", [ta, tb, out, row_broadcast, n]() mutable {
      const auto& g = out.grad();
      if (ta.requires_grad()) {
        auto& ga = ta.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tb.requires_grad()) {
        auto& gb = tb.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[row_broadcast ? i % n : i] += g[i];
      }
    });
  }
  return out;
}

Tensor add_scalar(Tape& tape, const Tensor& a, real c) {
  return pointwise(tape, "add_scalar", a, [c](real x) { return x + c; },
                   [](real, real) { return real(1); });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  out.set_requires_grad(needs_grad(a, b));
  const auto& va = a.values();
  const auto& vb = b.values();
  auto& vo = out.values();
  for (std::size_t i = 0; i < va.size(); ++i) vo[i] = va[i] * vb[i];
  if (tape.recording() && out.requires_grad()) {
    Tensor ta = a, tb = b;
    tape.record("mul", [ta, tb, out]() mutable {
      const auto& g = out.grad();
      if (ta.requires_grad()) {
        auto& ga = ta.grad();
        const auto& vb = tb.values();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (tb.requires_grad()) {
        auto& gb = tb.grad();
        const auto& va = ta.values();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, real c) {
  return pointwise(tape, "scale", a, [c](real x) { return c * x; },
                   [c](real, real) { return c; });
}

Tensor concat(Tape& tape, const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  Shape shape = parts[0].shape();
  const AxisSplit s0 = axis_split(shape, axis);
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    require(ps.size() == shape.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (i != axis && ps[i] != shape[i]) {
        fail("concat: shape mismatch " + shape_str(ps) + " vs " + shape_str(shape));
      }
    }
    total += ps[axis];
    rg = rg || p.requires_grad();
  }
  shape[axis] = total;
  Tensor out = Tensor::zeros(shape);
  out.set_requires_grad(rg);
  auto& vo = out.values();
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t pn = p.shape()[axis];
    const auto& vp = p.values();
    for (std::size_t o = 0; o < s0.outer; ++o) {
      const std::size_t dst = (o * total + off) * s0.inner;
      const std::size_t src = o * pn * s0.inner;
      std::copy(vp.begin() + src, vp.begin() + src + pn * s0.inner, vo.begin() + dst);
    }
    off += pn;
  }
  if (tape.recording() && rg) {
    std::vector<Tensor> ins = parts;
    tape.record("concat", [ins, out, s0, total]() mutable {
      const auto& g = out.grad();
      std::size_t off = 0;
      for (auto& p : ins) {
        const std::size_t an = p.size() / (s0.outer * s0.inner);
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t o = 0; o < s0.outer; ++o) {
            const std::size_t src = (o * total + off) * s0.inner;
            const std::size_t dst = o * an * s0.inner;
            for (std::size_t i = 0; i < an * s0.inner; ++i) gp[dst + i] += g[src + i];
          }
        }
        off += an;
      }
    });
  }
  return out;
}

Tensor slice(Tape& tape, const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  const AxisSplit s = axis_split(a.shape(), axis);
  require(start + len <= s.n, "slice: range out of bounds on axis");
  Shape shape = a.shape();
  shape[axis] = len;
  Tensor out = Tensor::zeros(shape);
  out.set_requires_grad(a.requires_grad());
  const auto& va = a.values();
  auto& vo = out.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    const std::size_t src = (o * s.n + start) * s.inner;
    std::copy(va.begin() + src, va.begin() + src + len * s.inner, vo.begin() + o * len * s.inner);
  }
  if (tape.recording() && a.requires_grad()) {
    Tensor in = a;
    tape.record("slice", [in, out, s, start, len]() mutable {
      const auto& g = out.grad();
      auto& gi = in.grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        const std::size_t dst = (o * s.n + start) * s.inner;
        for (std::size_t i = 0; i < len * s.inner; ++i) gi[dst + i] += g[o * len * s.inner + i];
      }
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
  return pointwise(tape, "relu", a, [](real x) { return x > 0 ? x : real(0); },
                   [](real x, real) { return x > 0 ? real(1) : real(0); });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return pointwise(tape, "sigmoid", a,
                   [](real x) { return real(1) / (real(1) + std::exp(-x)); },
                   [](real, real y) { return y * (real(1) - y); });
}

Tensor tanh(Tape& tape, const Tensor& a) {
  return pointwise(tape, "tanh", a, [](real x) { return std::tanh(x); },
                   [](real, real y) { return real(1) - y * y; });
}

Tensor softplus(Tape& tape, const Tensor& a) {
  return pointwise(tape, "softplus", a,
                   [](real x) {
                     if (x > real(30)) return x;
                     if (x < real(-30)) return std::exp(x);
                     return std::log1p(std::exp(x));
                   },
                   [](real x, real) { return real(1) / (real(1) + std::exp(-x)); });
}

Tensor exp(Tape& tape, const Tensor& a) {
  return pointwise(tape, "exp", a, [](real x) { return std::exp(x); },
                   [](real, real y) { return y; });
}

Tensor log(Tape& tape, const Tensor& a) {
  return pointwise(tape, "log", a, [](real x) { return std::log(x); },
                   [](real x, real) { return real(1) / x; });
}

Tensor softmax(Tape& tape, const Tensor& a, std::size_t axis) {
  const AxisSplit s = axis_split(a.shape(), axis);
  Tensor out = unary_out(a);
  const auto& x = a.values();
  auto& y = out.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      real mx = x[base];
      for (std::size_t j = 1; j < s.n; ++j) mx = std::max(mx, x[base + j * s.inner]);
      real z = 0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const real e = std::exp(x[base + j * s.inner] - mx);
        y[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) y[base + j * s.inner] /= z;
    }
  }
  if (tape.recording() && a.requires_grad()) {
    Tensor in = a;
    tape.record("softmax", [in, out, s]() mutable {
      const auto& g = out.grad();
      const auto& y = out.values();
      auto& gi = in.grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t iv = 0; iv < s.inner; ++iv) {
          const std::size_t base = o * s.n * s.inner + iv;
          real dot = 0;
          for (std::size_t j = 0; j < s.n; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
          for (std::size_t j = 0; j < s.n; ++j) {
            const std::size_t k = base + j * s.inner;
            gi[k] += y[k] * (g[k] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& a, std::size_t axis) {
  const AxisSplit s = axis_split(a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + axis);
  if (shape.empty()) shape = {1};
  Tensor out = Tensor::zeros(shape);
  out.set_requires_grad(a.requires_grad());
  const auto& x = a.values();
  auto& y = out.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t in = 0; in < s.inner; ++in)
        y[o * s.inner + in] += x[(o * s.n + j) * s.inner + in];
  if (tape.recording() && a.requires_grad()) {
    Tensor in = a;
    tape.record("sum", [in, out, s]() mutable {
      const auto& g = out.grad();
      auto& gi = in.grad();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < s.n; ++j)
          for (std::size_t iv = 0; iv < s.inner; ++iv)
            gi[(o * s.n + j) * s.inner + iv] += g[o * s.inner + iv];
    });
  }
  return out;
}

Tensor sum_all(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros({1});
  out.set_requires_grad(a.requires_grad());
  real acc = 0;
  for (real v : a.values()) acc += v;
  out.values()[0] = acc;
  if (tape.recording() && a.requires_grad()) {
    Tensor in = a;
    tape.record("sum_all", [in, out]() mutable {
      const real g = out.grad()[0];
      auto& gi = in.grad();
      for (auto& v : gi) v += g;
    });
  }
  return out;
}

Tensor mean_all(Tape& tape, const Tensor& a) {
  return scale(tape, sum_all(tape, a), real(1) / real(a.size()));
}

Tensor clamp(Tape& tape, const Tensor& a, real lo, real hi) {
  return pointwise(tape, "clamp", a,
                   [lo, hi](real x) { return std::min(hi, std::max(lo, x)); },
                   [lo, hi](real x, real) { return (x > lo && x < hi) ? real(1) : real(0); });
}

Tensor normalize_rows(Tape& tape, const Tensor& a, const std::vector<real>& fallback,
                      real eps_fallback) {
  require(a.rank() == 2, "normalize_rows: expects a rank-2 tensor");
  const std::size_t rows = a.dim(0), k = a.dim(1);
  require(fallback.size() == k, "normalize_rows: fallback length mismatch");
  Tensor out = unary_out(a);
  const auto& x = a.values();
  auto& y = out.values();
  std::vector<real> norms(rows, real(0));
  for (std::size_t r = 0; r < rows; ++r) {
    real sq = 0;
    for (std::size_t j = 0; j < k; ++j) sq += x[r * k + j] * x[r * k + j];
    const real nrm = std::sqrt(sq);
    norms[r] = nrm;
    if (nrm < eps_fallback) {
      for (std::size_t j = 0; j < k; ++j) y[r * k + j] = fallback[j];
    } else {
      for (std::size_t j = 0; j < k; ++j) y[r * k + j] = x[r * k + j] / nrm;
    }
  }
  if (tape.recording() && a.requires_grad()) {
    Tensor in = a;
    tape.record("normalize_rows", [in, out, norms, rows, k, eps_fallback]() mutable {
      const auto& g = out.grad();
      const auto& y = out.values();
      auto& gi = in.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        if (norms[r] < eps_fallback) continue;
        real dot = 0;
        for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
        for (std::size_t j = 0; j < k; ++j) {
          gi[r * k + j] += (g[r * k + j] - dot * y[r * k + j]) / norms[r];
        }
      }
    });
  }
  return out;
}

Tensor bilinear_sample2d(Tape& tape, const Tensor& map, const Tensor& uv) {
  require(map.rank() == 3, "bilinear_sample2d: map must be (C,H,W), got " + shape_str(map.shape()));
  require(uv.rank() == 2 && uv.dim(1) == 2,
          "bilinear_sample2d: uv must be (K,2), got " + shape_str(uv.shape()));
  const std::size_t c = map.dim(0), h = map.dim(1), w = map.dim(2);
  const std::size_t kn = uv.dim(0);
  Tensor out = Tensor::zeros({kn, c});
  out.set_requires_grad(needs_grad(map, uv));

  struct Taps {
    std::size_t ix0, ix1, iy0, iy1;
    real fx, fy;
  };
  auto taps_at = [w, h](real u, real v) {
    const real px = u * real(w) - real(0.5);
    const real py = v * real(h) - real(0.5);
    const real fx0 = std::floor(px), fy0 = std::floor(py);
    Taps t;
    t.fx = px - fx0;
    t.fy = py - fy0;
    auto cl = [](long i, std::size_t n) {
      return std::size_t(std::min<long>(long(n) - 1, std::max<long>(0, i)));
    };
    t.ix0 = cl(long(fx0), w);
    t.ix1 = cl(long(fx0) + 1, w);
    t.iy0 = cl(long(fy0), h);
    t.iy1 = cl(long(fy0) + 1, h);
    return t;
  };

  const auto& vm = map.values();
  const auto& vu = uv.values();
  auto& vo = out.values();
  for (std::size_t i = 0; i < kn; ++i) {
    const Taps t = taps_at(vu[2 * i], vu[2 * i + 1]);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const real* plane = vm.data() + ch * h * w;
      const real m00 = plane[t.iy0 * w + t.ix0];
      const real m01 = plane[t.iy0 * w + t.ix1];
      const real m10 = plane[t.iy1 * w + t.ix0];
      const real m11 = plane[t.iy1 * w + t.ix1];
      vo[i * c + ch] = (1 - t.fy) * ((1 - t.fx) * m00 + t.fx * m01) +
                       t.fy * ((1 - t.fx) * m10 + t.fx * m11);
    }
  }
  if (tape.recording() && out.requires_grad()) {
    Tensor tm = map, tu = uv;
    tape.record("bilinear_sample2d", [tm, tu, out, taps_at, c, h, w, kn]() mutable {
      const auto& g = out.grad();
      const auto& vm = tm.values();
      const auto& vu = tu.values();
      for (std::size_t i = 0; i < kn; ++i) {
        const Taps t = taps_at(vu[2 * i], vu[2 * i + 1]);
        real du = 0, dv = 0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const real go = g[i * c + ch];
          if (go == real(0) && !tu.requires_grad()) continue;
          const std::size_t base = ch * h * w;
          const std::size_t k00 = base + t.iy0 * w + t.ix0;
          const std::size_t k01 = base + t.iy0 * w + t.ix1;
          const std::size_t k10 = base + t.iy1 * w + t.ix0;
          const std::size_t k11 = base + t.iy1 * w + t.ix1;
          if (tm.requires_grad()) {
            auto& gm = tm.grad();
            gm[k00] += go * (1 - t.fx) * (1 - t.fy);
            gm[k01] += go * t.fx * (1 - t.fy);
            gm[k10] += go * (1 - t.fx) * t.fy;
            gm[k11] += go * t.fx * t.fy;
          }
          if (tu.requires_grad()) {
            const real dfx = (1 - t.fy) * (vm[k01] - vm[k00]) + t.fy * (vm[k11] - vm[k10]);
            const real dfy = (1 - t.fx) * (vm[k10] - vm[k00]) + t.fx * (vm[k11] - vm[k01]);
            du += go * dfx * real(w);
            dv += go * dfy * real(h);
          }
        }
        if (tu.requires_grad()) {
          auto& gu = tu.grad();
          gu[2 * i] += du;
          gu[2 * i + 1] += dv;
        }
      }
    });
  }
  return out;
}

}  // namespace gocc::ops
