#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lorvp/errors.hpp"
#include "lorvp/tensor/shape.hpp"

namespace lorvp {

template <class T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

template <Real T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty when absent
  bool requires_grad = false;
  std::uint64_t generation = 0;  // tape generation that produced it; 0 for leaves
  std::string_view producer;
};

template <Real T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

namespace detail {

template <Real T>
void check_finite(std::span<const T> values, std::string_view where) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError("non-finite value at flat index " + std::to_string(i) + " in " +
                         std::string(where));
    }
  }
}

template <Real T>
std::vector<T>& grad_buffer(TensorImpl<T>& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), T(0));
  return t.grad;
}

}  // namespace detail

/// Shared handle to a dense row-major array. Copies alias the same storage,
/// which is how parameters are handed to layers and optimizers; use clone()
/// for an independent copy. Operations never write to their inputs.
template <Real T>
class Tensor {
 public:
  using value_type = T;

  /// Rank-0 zero.
  Tensor() : Tensor(Shape{}, std::vector<T>{T(0)}) {}

  Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<TensorImpl<T>>()) {
    if (data.size() != lorvp::numel(shape)) {
      throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                       to_string(shape));
    }
    detail::check_finite<T>(data, "tensor construction");
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  explicit Tensor(ImplPtr<T> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape) {
    const auto n = lorvp::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)));
  }

  static Tensor full(Shape shape, T value) {
    const auto n = lorvp::numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape& shape() const noexcept { return impl_->shape; }
  std::size_t rank() const noexcept { return impl_->shape.size(); }
  std::size_t numel() const noexcept { return impl_->data.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }

  std::span<const T> data() const noexcept { return impl_->data; }

  /// In-place access for optimizers and initializers; bypasses the tape.
  std::span<T> mutable_data() noexcept { return impl_->data; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return impl_->data[0];
  }

  T operator[](std::size_t i) const { return impl_->data.at(i); }

  bool requires_grad() const noexcept { return impl_->requires_grad; }

  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const noexcept { return !impl_->grad.empty(); }
  std::span<const T> grad() const noexcept { return impl_->grad; }
  void clear_grad() noexcept { impl_->grad.clear(); }

  Tensor clone() const { return Tensor(shape(), impl_->data); }

  template <Real U>
  Tensor<U> cast() const {
    std::vector<U> out(impl_->data.begin(), impl_->data.end());
    return Tensor<U>(shape(), std::move(out));
  }

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  const ImplPtr<T>& impl() const noexcept { return impl_; }

 private:
  ImplPtr<T> impl_;
};

// Gradient recording is on by default and can be suspended per thread.
class GradMode {
 public:
  static bool enabled() noexcept { return flag(); }
  static void set(bool on) noexcept { flag() = on; }

 private:
  static bool& flag() noexcept {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace testing {

// Fault injection for verification tests: the backward rule of the named op
// receives a scaled upstream gradient, so its output gradients are wrong.
inline std::string& corrupted_backward_op() {
  static std::string name;
  return name;
}

class CorruptBackward {
 public:
  explicit CorruptBackward(std::string op) { corrupted_backward_op() = std::move(op); }
  ~CorruptBackward() { corrupted_backward_op().clear(); }
  CorruptBackward(const CorruptBackward&) = delete;
  CorruptBackward& operator=(const CorruptBackward&) = delete;
};

}  // namespace testing

template <Real T>
struct TapeNode {
  std::string_view op;
  std::vector<ImplPtr<T>> inputs;
  ImplPtr<T> output;
  std::function<void(const std::vector<T>&)> backward;
};

/// Ordered record of differentiable operations on the current thread.
/// Nodes are appended as ops execute, so inputs always precede their
/// consumers. backward() consumes the tape: it is cleared afterwards and a
/// second backward on the same loss is a state error.
template <Real T>
class Tape {
 public:
  static Tape& current() {
    thread_local Tape tape;
    return tape;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::uint64_t generation() const noexcept { return generation_; }

  std::vector<std::string_view> ops() const {
    std::vector<std::string_view> names;
    names.reserve(nodes_.size());
    for (const auto& n : nodes_) names.push_back(n.op);
    return names;
  }

  void record(std::string_view op, std::vector<ImplPtr<T>> inputs, const ImplPtr<T>& output,
              std::function<void(const std::vector<T>&)> backward) {
    output->generation = generation_;
    output->producer = op;
    nodes_.push_back(TapeNode<T>{op, std::move(inputs), output, std::move(backward)});
  }

  /// Drops the recorded graph without differentiating it.
  void clear() {
    nodes_.clear();
    ++generation_;
  }

  void backward(const Tensor<T>& loss) {
    if (loss.rank() != 0) {
      throw ContractError("backward() needs a rank-0 loss, got shape " + to_string(loss.shape()));
    }
    const auto& root = loss.impl();
    if (root->generation == 0) {
      throw StateError("backward(): loss was not produced by a recorded operation");
    }
    if (root->generation != generation_) {
      throw StateError("backward(): the tape holding this loss was already consumed");
    }
    root->grad.assign(1, T(1));
    const std::string& corrupted = testing::corrupted_backward_op();
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      auto& node = nodes_[i];
      if (node.output->grad.empty()) continue;
      if (!corrupted.empty() && node.op == corrupted) {
        std::vector<T> scaled = node.output->grad;
        for (auto& g : scaled) g *= T(1.5);
        node.backward(scaled);
      } else {
        node.backward(node.output->grad);
      }
    }
    for (auto& node : nodes_) node.output->grad.clear();
    clear();
  }

 private:
  std::vector<TapeNode<T>> nodes_;
  std::uint64_t generation_ = 1;
};

template <Real T>
void backward(const Tensor<T>& loss) {
  Tape<T>::current().backward(loss);
}

/// Constructs a tensor owning a copy of `data`.
template <Real T>
Tensor<T> tensor_new(Shape shape, std::span<const T> data) {
  return Tensor<T>(std::move(shape), std::vector<T>(data.begin(), data.end()));
}

}  // namespace lorvp
