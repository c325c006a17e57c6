#include "sketchmatch/tensor.hpp"

#include <utility>

namespace sketchmatch {

static thread_local Tape* g_active_tape = nullptr;

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), real(0), requires_grad);
}

Tensor Tensor::full(Shape shape, real fill, bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  node->value.assign(shape_numel(shape), fill);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<real> data, bool requires_grad) {
  require(shape_numel(shape) == data.size(),
          "tensor: data length " + std::to_string(data.size()) +
              " does not match shape " + shape_str(shape));
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(real v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

real Tensor::item() const {
  require(is_scalar(), "tensor: item() on non-scalar of shape " + shape_str(shape()));
  return node_->value[0];
}

const std::vector<real>& Tensor::grad() const {
  require(defined() && !node_->grad.empty(),
          "tensor: gradient requested but none populated");
  return node_->grad;
}

Tensor make_op_output(Shape shape, bool requires_grad) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(requires_grad);
  return t;
}

Tape::Tape() {
  previous_ = g_active_tape;
  g_active_tape = this;
}

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_fn) {
  entries_.push_back(std::move(backward_fn));
}

void Tape::backward(Tensor loss) {
  require(loss.defined() && loss.is_scalar(),
          "backward: loss must be a scalar, got shape " +
              (loss.defined() ? shape_str(loss.shape()) : std::string("<null>")));
  require(!entries_.empty(), "backward: tape is empty");
  loss.node()->ensure_grad();
  loss.node()->grad[0] = real(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

bool grad_enabled_for(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace sketchmatch
