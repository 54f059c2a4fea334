#include "gocc/tensor.hpp"

#include <numeric>
#include <sstream>

namespace gocc {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

static std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) {
    require(d > 0, "tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), real(0), requires_grad);
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
  Tensor t;
  t.d_ = std::make_shared<Data>();
  t.d_->shape = std::move(shape);
  t.d_->values.assign(shape_numel(t.d_->shape), value);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<real> values, bool requires_grad) {
  require(values.size() == shape_numel(shape),
          "tensor value count does not match shape " + shape_str(shape));
  Tensor t;
  t.d_ = std::make_shared<Data>();
  t.d_->shape = std::move(shape);
  t.d_->values = std::move(values);
  t.d_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::vector<real>& Tensor::grad() {
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), real(0));
  return d_->grad;
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) d_->grad.assign(d_->values.size(), real(0));
}

real Tensor::item() const {
  require(d_ && d_->values.size() == 1, "item() requires a scalar tensor");
  return d_->values[0];
}

void Tape::backward(Tensor loss) {
  require(!spent_, "tape backward called twice without reset");
  require(loss.defined() && loss.size() == 1, "backward requires a scalar loss");
  loss.grad()[0] = real(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward_fn();
  spent_ = true;
}

}  // namespace gocc
