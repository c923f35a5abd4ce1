#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cffuse/errors.hpp"

namespace cffuse {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& dims);
std::string shape_str(const Shape& dims);

namespace detail {

struct TensorNode {
  Shape dims;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first backward reaches this node
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major float64 tensor with optional participation in a
/// dynamically recorded reverse-mode tape.
///
/// Copies are shallow: two Tensor handles may refer to the same storage.
/// Use clone() for a deep copy without history.
class Tensor {
 public:
  Tensor();
  Tensor(Shape dims, std::vector<double> values);

  static Tensor zeros(Shape dims);
  static Tensor ones(Shape dims);
  static Tensor full(Shape dims, double value);
  static Tensor scalar(double value);

  const Shape& dims() const { return node_->dims; }
  std::size_t dim(std::size_t axis) const { return node_->dims.at(axis); }
  std::size_t rank() const { return node_->dims.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access. Only for initialisation and optimiser updates
  /// of leaf tensors; mutating a tensor that is part of a live graph
  /// invalidates its gradients.
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return node_->is_leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  Tensor grad_tensor() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate
  /// across calls; interior gradients are recomputed each call.
  void backward() const;

  /// New leaf sharing no history (deep copy of values).
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Op construction. Records the node on the tape when any parent needs
  // gradients and gradient recording is enabled.
  static Tensor make_result(Shape dims, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::TensorNode&)> backward_fn);

  detail::TensorNode& node() const { return *node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

/// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace cffuse
