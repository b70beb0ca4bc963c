#include "emocpd/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace emocpd::nn {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << "]";
  return out.str();
}

namespace {

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> value) {
  auto node = std::make_shared<Node>();
  if (static_cast<int64_t>(value.size()) != shape_numel(shape))
    throw ShapeError("data length does not match shape " + shape_str(shape));
  node->shape = std::move(shape);
  node->value = std::move(value);
  return node;
}

}  // namespace

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }

Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(new_node(shape, std::vector<double>(static_cast<size_t>(shape_numel(shape)), value)));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data) {
  return Tensor(new_node(shape, std::move(data)));
}

Tensor Tensor::param(const Shape& shape, std::vector<double> data, std::string name) {
  Tensor t(new_node(shape, std::move(data)));
  t.node_->requires_grad = true;
  t.node_->name = std::move(name);
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(node_->value.size()); }
const std::vector<double>& Tensor::data() const { return node_->value; }
std::vector<double>& Tensor::mutable_data() { return node_->value; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
const std::string& Tensor::name() const { return node_->name; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) throw Error("tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::backward() const {
  if (!node_) throw Error("backward on empty tensor");
  if (node_->value.size() != 1) throw ShapeError("backward requires a scalar loss");

  // Iterative post-order DFS; reversed it gives a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& frame = stack.back();
    if (frame.next_parent < frame.node->parents.size()) {
      Node* parent = frame.node->parents[frame.next_parent++].get();
      if (visited.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(frame.node);
      stack.pop_back();
    }
  }

  node_->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Tensor make_op(Shape shape, std::vector<double> value, const std::vector<Tensor>& parents,
               std::function<void(Node&)> backward_fn) {
  auto node = new_node(std::move(shape), std::move(value));
  bool needs_grad = false;
  for (const Tensor& p : parents)
    if (p.defined() && p.requires_grad()) needs_grad = true;
  if (needs_grad) {
    node->requires_grad = true;
    for (const Tensor& p : parents)
      if (p.defined()) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(node);
}

}  // namespace emocpd::nn
