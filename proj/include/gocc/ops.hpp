#pragma once

#include "gocc/tensor.hpp"

namespace gocc::ops {

// Every primitive evaluates eagerly and, when any input carries
// requires_grad, records a vector-Jacobian closure on the tape.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);       // (m,k)x(k,n)
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);          // same shape, or (m,n)+(n) rows
Tensor add_scalar(Tape& tape, const Tensor& a, real c);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);          // elementwise, same shape
Tensor scale(Tape& tape, const Tensor& a, real c);
Tensor concat(Tape& tape, const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(Tape& tape, const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
Tensor relu(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);
Tensor softplus(Tape& tape, const Tensor& a);
Tensor exp(Tape& tape, const Tensor& a);
Tensor log(Tape& tape, const Tensor& a);
Tensor softmax(Tape& tape, const Tensor& a, std::size_t axis);
Tensor sum(Tape& tape, const Tensor& a, std::size_t axis);
Tensor sum_all(Tape& tape, const Tensor& a);
Tensor mean_all(Tape& tape, const Tensor& a);
Tensor clamp(Tape& tape, const Tensor& a, real lo, real hi);

// Row-wise x/|x| over a (rows, k) tensor. Rows with |x| < eps_fallback map to
// `fallback` (k entries) and pass zero gradient.
Tensor normalize_rows(Tape& tape, const Tensor& a, const std::vector<real>& fallback,
                      real eps_fallback = real(1e-8));

// map: (C,H,W); uv: (K,2) normalized coordinates in [0,1]^2 with texel
// centers at ((i+0.5)/W, (j+0.5)/H). Out-of-range samples border-clamp and
// pass zero gradient through the clamped coordinate direction.
Tensor bilinear_sample2d(Tape& tape, const Tensor& map, const Tensor& uv);

// Strided view decomposition used by axis ops: shape = outer x n x inner.
struct AxisSplit {
  std::size_t outer, n, inner;
};
AxisSplit axis_split(const Shape& shape, std::size_t axis);

}  // namespace gocc::ops
