#pragma once

#include <map>
#include <string>

#include "gocc/ops.hpp"

namespace gocc {

enum class Activation { none, relu, tanh, sigmoid };

struct LinearLayer {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)
  Activation act = Activation::none;
};

// Affine + activation stack. The last layer's activation is whatever the
// layer says (heads use none).
struct Mlp {
  std::vector<LinearLayer> layers;

  std::size_t in_dim() const { return layers.front().weight.dim(0); }
  std::size_t out_dim() const { return layers.back().weight.dim(1); }
};

// dims = {in, h1, ..., out}; hidden layers get `hidden_act`, the output layer
// Activation::none. Weights ~ N(0, 1/sqrt(in)), biases zero.
Mlp make_mlp(const std::vector<std::size_t>& dims, Rng& rng,
             Activation hidden_act = Activation::relu, bool trainable = true);

Tensor mlp_forward(Tape& tape, const Mlp& mlp, const Tensor& x);

// Ordered name -> tensor registry; iteration order is insertion order so the
// optimizer walk and checkpoint layout are stable.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  void add_mlp(const std::string& prefix, Mlp& mlp);
  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace gocc
