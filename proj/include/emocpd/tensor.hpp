#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "emocpd/errors.hpp"

namespace emocpd::nn {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;

// Value-semantic handle onto a node of the computation graph. Leaves hold
// parameters or inputs; interior nodes remember how to push gradients to
// their parents. Data is double throughout; gradient checks need the
// headroom and desk-scale models don't need the memory back.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor from_data(const Shape& shape, std::vector<double> data);
  // Leaf with requires_grad, the parameter constructor.
  static Tensor param(const Shape& shape, std::vector<double> data, std::string name = {});

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  const std::vector<double>& data() const;
  std::vector<double>& mutable_data();
  bool requires_grad() const;
  void set_requires_grad(bool on);
  const std::string& name() const;

  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  // Scalar extraction; throws unless numel() == 1.
  double item() const;

  // Reverse-mode accumulation from a scalar. Gradients add into any leaf
  // reachable from here that has requires_grad set.
  void backward() const;

  std::shared_ptr<Node> node() const { return node_; }

private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  double* grad_data() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

// Builds an interior node. If no parent requires a gradient the parents and
// backward function are dropped, so inference builds no graph at all.
Tensor make_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& parents,
               std::function<void(Node&)> backward_fn);

}  // namespace emocpd::nn
