#include "gocc/nn.hpp"

namespace gocc {

Mlp make_mlp(const std::vector<std::size_t>& dims, Rng& rng, Activation hidden_act,
             bool trainable) {
  require(dims.size() >= 2, "mlp needs at least input and output dims");
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l], out = dims[l + 1];
    std::vector<real> w(in * out);
    const real sd = real(1) / std::sqrt(real(in));
    for (auto& v : w) v = real(rng.normal()) * sd;
    LinearLayer layer;
    layer.weight = Tensor::from({in, out}, std::move(w), trainable);
    layer.bias = Tensor::zeros({out}, trainable);
    layer.act = (l + 2 < dims.size()) ? hidden_act : Activation::none;
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

static Tensor apply_act(Tape& tape, Activation act, const Tensor& x) {
  switch (act) {
    case Activation::none: return x;
    case Activation::relu: return ops::relu(tape, x);
    case Activation::tanh: return ops::tanh(tape, x);
    case Activation::sigmoid: return ops::sigmoid(tape, x);
  }
  return x;
}

Tensor mlp_forward(Tape& tape, const Mlp& mlp, const Tensor& x) {
  require(x.rank() == 2, "mlp_forward: input must be (rows, features)");
  Tensor h = x;
  for (const auto& layer : mlp.layers) {
    if (h.dim(1) != layer.weight.dim(0)) {
      fail("mlp_forward: feature dim " + shape_str(h.shape()) + " does not chain into weight " +
           shape_str(layer.weight.shape()));
    }
    h = ops::add(tape, ops::matmul(tape, h, layer.weight), layer.bias);
    h = apply_act(tape, layer.act, h);
  }
  return h;
}

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  require(!index_.count(name), "duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

void ParamStore::add_mlp(const std::string& prefix, Mlp& mlp) {
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    add(prefix + ".l" + std::to_string(l) + ".w", mlp.layers[l].weight);
    add(prefix + ".l" + std::to_string(l) + ".b", mlp.layers[l].bias);
  }
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) > 0; }

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  require(it != index_.end(), "unknown parameter: " + name);
  return entries_[it->second].second;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [_, t] : entries_) out.push_back(t);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

}  // namespace gocc
