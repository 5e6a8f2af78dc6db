#include "gfnet/numcore/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "gfnet/util/errors.hpp"

namespace gfnet {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) { return full(shape, real(0), requires_grad); }

Tensor Tensor::full(const Shape& shape, real value, bool requires_grad) {
  return from(shape, std::vector<real>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<real> values, bool requires_grad) {
  if (values.size() != shape_numel(shape)) {
    throw ConfigError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                      shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->data = std::move(values);
  Tensor t(std::move(node));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(real value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  if (!node_) throw UsageError("tensor: undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw UsageError("tensor: axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const real> Tensor::data() const {
  if (!node_) throw UsageError("tensor: undefined tensor");
  return node_->data;
}

std::span<real> Tensor::mutable_data() {
  if (!node_) throw UsageError("tensor: undefined tensor");
  if (!node_->is_leaf) throw UsageError("tensor: in-place write to a non-leaf tensor");
  return node_->data;
}

real Tensor::item() const {
  if (numel() != 1) throw UsageError("tensor: item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw UsageError("tensor: undefined tensor");
  if (!node_->is_leaf) throw UsageError("tensor: requires_grad can only be set on leaves");
  node_->requires_grad = on;
  if (on) node_->ensure_grad();
}

bool Tensor::is_leaf() const { return node_ && node_->is_leaf; }

std::span<const real> Tensor::grad() const {
  if (!node_) throw UsageError("tensor: undefined tensor");
  node_->ensure_grad();
  return node_->grad;
}

std::span<real> Tensor::mutable_grad() {
  if (!node_) throw UsageError("tensor: undefined tensor");
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_) return;
  node_->grad.assign(node_->data.size(), real(0));
}

void Tensor::backward() const {
  if (!node_) throw UsageError("backward: undefined tensor");
  if (!node_->requires_grad) throw UsageError("backward: tensor is detached from the tape");
  if (node_->data.size() != 1) throw UsageError("backward: loss must be a scalar");

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf) n->grad.assign(n->data.size(), real(0));
    n->ensure_grad();
  }
  node_->grad[0] += real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(*n);
  }
  for (auto* n : order) {
    if (!n->is_leaf) continue;
    for (real g : n->grad) {
      if (!std::isfinite(g)) throw NumericError("backward: non-finite gradient on a leaf tensor");
    }
  }
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  if (node_ && node_->is_leaf && node_->requires_grad) t.set_requires_grad(true);
  return t;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void ensure_finite(const Tensor& t, const std::string& where) {
  for (real v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(where + ": non-finite value");
  }
}

namespace detail {

Tensor make_result(Shape shape, std::vector<real> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace gfnet
