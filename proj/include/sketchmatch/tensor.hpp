#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sketchmatch/common.hpp"

namespace sketchmatch {

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<real> value;
  bool requires_grad = false;
  std::vector<real> grad;  // allocated on first accumulation, same length as value

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), real(0));
  }
};

}  // namespace detail

// Dense n-dimensional array with value semantics over a shared node. Tensors
// are immutable once they participate in a recorded computation; the mutating
// accessors exist for parameter updates and test harnesses.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<real> data, bool requires_grad = false);
  static Tensor scalar(real v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t ndim() const { return node_->shape.size(); }
  bool is_scalar() const { return size() == 1; }

  // 2-D helpers; most of the network works on row matrices.
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }

  const std::vector<real>& value() const { return node_->value; }
  std::vector<real>& raw_value() { return node_->value; }
  real item() const;
  real at(std::size_t i) const { return node_->value.at(i); }
  real at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return defined() && !node_->grad.empty(); }
  const std::vector<real>& grad() const;
  void zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), real(0));
  }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;

  friend class Tape;
  friend Tensor make_op_output(Shape, bool);
};

// Wengert list. Forward primitives append one entry per executed operation
// whenever a tape is active and some input requires grad; entries run in
// reverse on backward, so every input's gradient is complete before its
// producer executes. The tape is confined to one training worker; forward
// passes without an active tape record nothing and are safe to run
// concurrently with frozen weights.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Seeds d(loss)/d(loss) = 1, replays entries in reverse order exactly once
  // each, then clears the tape. Gradients accumulate into .grad buffers, so
  // callers zero parameter grads between steps.
  void backward(Tensor loss);

  void clear() { entries_.clear(); }

 private:
  std::vector<std::function<void()>> entries_;
  Tape* previous_ = nullptr;
};

// True when an op with these inputs should be recorded.
bool grad_enabled_for(std::initializer_list<const Tensor*> inputs);

}  // namespace sketchmatch
