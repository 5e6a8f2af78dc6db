#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gfnet {

#ifdef GFNET_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty until needed
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad, accumulates into inputs' grad buffers.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), real(0));
  }
};

}  // namespace detail

/// Dense row-major tensor with optional participation in a dynamic reverse-mode tape.
///
/// Tensors are cheap handles; copies share storage. The tape is rebuilt on
/// every forward pass: each op result keeps its inputs alive and carries the
/// closure that propagates its gradient.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, real value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<real> values, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const real> data() const;
  /// In-place writes bypass the tape; only for leaves (parameters, inputs).
  std::span<real> mutable_data();
  real item() const;
  real at(std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  std::span<const real> grad() const;
  std::span<real> mutable_grad();
  void zero_grad();

  /// Reverse-mode accumulation from this scalar into every reachable tensor that requires grad.
  void backward() const;

  /// Same values, cut from the tape.
  Tensor detach() const;
  Tensor clone() const;

  // Internal: used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables tape recording for the current thread while alive.
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

/// Throws NumericError naming `where` if any value is NaN/Inf.
void ensure_finite(const Tensor& t, const std::string& where);

namespace detail {

/// Builds an op result; records it on the tape iff grad mode is on and some input requires grad.
Tensor make_result(Shape shape, std::vector<real> data, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

}  // namespace detail

}  // namespace gfnet
