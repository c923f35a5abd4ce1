#include "cffuse/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace cffuse {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel_of(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor() : Tensor(Shape{1}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape dims, std::vector<double> values)
    : node_(std::make_shared<detail::TensorNode>()) {
  for (auto d : dims) {
    if (d == 0) throw DimensionError("tensor dims must be positive, got " + shape_str(dims));
  }
  if (numel_of(dims) != values.size()) {
    throw DimensionError("tensor of shape " + shape_str(dims) + " needs " +
                         std::to_string(numel_of(dims)) + " values, got " +
                         std::to_string(values.size()));
  }
  node_->dims = std::move(dims);
  node_->data = std::move(values);
}

Tensor Tensor::zeros(Shape dims) { return full(std::move(dims), 0.0); }
Tensor Tensor::ones(Shape dims) { return full(std::move(dims), 1.0); }

Tensor Tensor::full(Shape dims, double value) {
  const auto n = numel_of(dims);
  return Tensor(std::move(dims), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, {value}); }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(dims()));
  return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

Tensor Tensor::grad_tensor() const {
  if (!has_grad()) return Tensor::zeros(dims());
  return Tensor(dims(), node_->grad);
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(dims(), node_->data); }

Tensor Tensor::make_result(Shape dims, std::vector<double> values, std::vector<Tensor> parents,
                           std::function<void(detail::TensorNode&)> backward_fn) {
  Tensor out(std::move(dims), std::move(values));
  if (!g_grad_enabled) return out;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.node_->requires_grad;
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->is_leaf = false;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward_fn = std::move(backward_fn);
  return out;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " + shape_str(dims()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> seen;
  std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      auto* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf) n->grad.assign(n->data.size(), 0.0);
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* n = *it;
    if (n->is_leaf || !n->backward_fn) continue;
    for (auto& p : n->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n->backward_fn(*n);
  }
  for (auto* n : order) {
    if (!n->is_leaf) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

}  // namespace cffuse
