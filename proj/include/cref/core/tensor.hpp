#pragma once

// Dense tensors (rank 0..2) with a dynamic reverse-mode tape.
//
// Every op result records its parents and a backward closure while gradient
// recording is enabled. backward(loss) walks the graph once in reverse
// topological order, accumulates into the grad buffers of trainable leaves,
// and then releases the graph. A second backward() over a released graph is
// rejected.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cref/core/real.hpp"

namespace cref {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  // Grad buffer of a parent that wants gradient, or nullptr.
  real* grad_of(std::size_t parent) {
    Node& p = *parents[parent];
    if (!p.requires_grad) return nullptr;
    if (p.grad.empty()) p.grad.assign(p.value.size(), real(0));
    return p.grad.data();
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, real value);
  static Tensor from(Shape shape, std::vector<real> values);
  static Tensor scalar(real value);
  static Tensor vector(std::vector<real> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<real> values);
  // Trainable leaf.
  static Tensor parameter(Shape shape, std::vector<real> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  // Matrix view helpers; a vector is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const real> values() const { return node_->value; }
  real item() const;
  real operator[](std::size_t i) const { return node_->value[i]; }
  real at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf(); }
  bool has_grad() const { return !node_->grad.empty(); }
  // Throws if no backward pass has reached this tensor since the last clear.
  std::span<const real> grad() const;
  // Gradient, or zeros if the tensor did not take part in a backward pass.
  std::vector<real> grad_or_zero() const;

  // Optimizers and initializers write leaves in place.
  std::span<real> mutable_values();
  std::span<real> mutable_grad();
  void clear_grad() { node_->grad = {}; }

  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  // Used by op implementations: builds a result that records `parents` when
  // gradient recording is on and at least one parent requires grad.
  static Tensor make_result(Shape shape, std::vector<real> value,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward_fn);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

void backward(const Tensor& loss);

bool grad_enabled();

// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace cref
