#include "cref/core/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

namespace cref {
namespace {

thread_local bool t_grad_enabled = true;

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), real(0)); }

Tensor Tensor::full(Shape shape, real value) {
  const std::size_t n = element_count(shape);
  return from(std::move(shape), std::vector<real>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<real> values) {
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  if (shape.size() > 2) throw ShapeError("tensor rank > 2 unsupported: " + shape_string(shape));
  if (element_count(shape) != values.size())
    throw ShapeError("shape " + shape_string(shape) + " needs " +
                     std::to_string(element_count(shape)) + " elements, got " +
                     std::to_string(values.size()));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(real value) { return from({}, {value}); }

Tensor Tensor::vector(std::vector<real> values) {
  const std::size_t n = values.size();
  return from({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<real> values) {
  return from({rows, cols}, std::move(values));
}

Tensor Tensor::parameter(Shape shape, std::vector<real> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape()[1];
  if (rank() == 1) return shape()[0];
  return 1;
}

real Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

std::span<const real> Tensor::grad() const {
  if (node_->grad.empty()) throw std::logic_error("tensor has no gradient buffer");
  return node_->grad;
}

std::vector<real> Tensor::grad_or_zero() const {
  if (node_->grad.empty()) return std::vector<real>(size(), real(0));
  return node_->grad;
}

std::span<real> Tensor::mutable_values() {
  if (!is_leaf()) throw std::logic_error("only leaf tensors can be written in place");
  return node_->value;
}

std::span<real> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(size(), real(0));
  return node_->grad;
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::make_result(Shape shape, std::vector<real> value, std::vector<Tensor> parents,
                           std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (t_grad_enabled) {
    bool any = false;
    for (const Tensor& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (Tensor& p : parents) node->parents.push_back(std::move(p.node_));
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward() on undefined tensor");
  if (loss.size() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  detail::Node* root = loss.node().get();
  if (root->consumed) throw std::logic_error("backward() already ran over this graph");
  if (!root->requires_grad)
    throw std::logic_error("loss does not depend on any trainable tensor");

  // Iterative post-order DFS over nodes that want gradient.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (detail::Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), real(0));
    else if (n->grad.empty()) n->grad.assign(n->value.size(), real(0));
  }
  root->grad[0] += real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->is_leaf()) n->backward_fn(*n);
  }
  for (detail::Node* n : order) {
    if (n->is_leaf()) continue;
    n->consumed = true;
    n->requires_grad = false;
    n->parents.clear();
    n->backward_fn = nullptr;
    n->grad = {};
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace cref
