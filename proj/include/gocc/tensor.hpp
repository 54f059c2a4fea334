#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gocc/common.hpp"

namespace gocc {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major array participating in reverse-mode differentiation.
// Copying a Tensor copies the handle; storage is shared.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<real> values, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t size() const { return d_->values.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape[i]; }
  std::size_t rank() const { return d_->shape.size(); }

  std::vector<real>& values() { return d_->values; }
  const std::vector<real>& values() const { return d_->values; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool v) { d_->requires_grad = v; }

  // Gradient slot, lazily allocated to zeros.
  std::vector<real>& grad();
  bool has_grad() const { return !d_->grad.empty(); }
  void zero_grad();

  real item() const;

  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

 private:
  struct Data {
    Shape shape;
    std::vector<real> values;
    std::vector<real> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

// Define-by-run tape. Nodes are recorded in execution order and replayed in
// exact reverse order by backward(). Single-threaded by contract; run one
// tape per scene when batching.
class Tape {
 public:
  bool recording() const { return recording_; }

  void record(const char* op, std::function<void()> backward_fn) {
    if (recording_) nodes_.push_back({op, std::move(backward_fn)});
  }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded node in reverse.
  // `loss` must be scalar; calling twice without reset() is an error.
  void backward(Tensor loss);

  void reset() {
    nodes_.clear();
    spent_ = false;
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  friend struct NoGradGuard;
  struct Node {
    const char* op;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
  bool spent_ = false;
  bool recording_ = true;
};

// Temporarily disables recording (evaluation passes, benchmarks).
struct NoGradGuard {
  explicit NoGradGuard(Tape& tape) : tape_(tape), prev_(tape.recording_) { tape_.recording_ = false; }
  ~NoGradGuard() { tape_.recording_ = prev_; }
  Tape& tape_;
  bool prev_;
};

}  // namespace gocc
