#include "gfnet/numcore/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "gfnet/util/errors.hpp"

namespace gfnet {

namespace {

using MatR = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using VecR = Eigen::Matrix<real, Eigen::Dynamic, 1>;

using detail::make_result;
using detail::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw ConfigError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                      shape_str(a.shape()));
  }
}

// Elementwise unary op where the local derivative depends on (input, output).
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  auto in = a.data();
  std::vector<real> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(a.shape(), std::move(out), {a}, [deriv](Node& n) {
    Node& x = *n.inputs[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i] * deriv(x.data[i], n.data[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.data(), y = b.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
    for (auto& in : n.inputs) {
      if (!in->requires_grad) continue;
      for (std::size_t i = 0; i < n.grad.size(); ++i) in->grad[i] += n.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto x = a.data(), y = b.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
    Node& l = *n.inputs[0];
    Node& r = *n.inputs[1];
    if (l.requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) l.grad[i] += n.grad[i];
    if (r.requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) r.grad[i] -= n.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.data(), y = b.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
    Node& l = *n.inputs[0];
    Node& r = *n.inputs[1];
    if (l.requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) l.grad[i] += n.grad[i] * r.data[i];
    if (r.requires_grad)
      for (std::size_t i = 0; i < n.grad.size(); ++i) r.grad[i] += n.grad[i] * l.data[i];
  });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "minimum");
  auto x = a.data(), y = b.data();
  std::vector<real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::min(x[i], y[i]);
  // Ties route the gradient to the first argument.
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& n) {
    Node& l = *n.inputs[0];
    Node& r = *n.inputs[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const bool left = l.data[i] <= r.data[i];
      if (left && l.requires_grad) l.grad[i] += n.grad[i];
      if (!left && r.requires_grad) r.grad[i] += n.grad[i];
    }
  });
}

Tensor scale(const Tensor& a, real s) {
  return unary(a, [s](real v) { return v * s; }, [s](real, real) { return s; });
}

Tensor add_scalar(const Tensor& a, real s) {
  return unary(a, [s](real v) { return v + s; }, [](real, real) { return real(1); });
}

Tensor one_minus(const Tensor& a) {
  return unary(a, [](real v) { return real(1) - v; }, [](real, real) { return real(-1); });
}

Tensor square(const Tensor& a) {
  return unary(a, [](real v) { return v * v; }, [](real x, real) { return real(2) * x; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](real v) { return std::exp(v); }, [](real, real y) { return y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](real v) {
        if (v >= 0) return real(1) / (real(1) + std::exp(-v));
        const real e = std::exp(v);
        return e / (real(1) + e);
      },
      [](real, real y) { return y * (real(1) - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](real v) { return std::tanh(v); }, [](real, real y) { return real(1) - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](real v) { return v > 0 ? v : real(0); },
               [](real x, real) { return x > 0 ? real(1) : real(0); });
}

Tensor clamp(const Tensor& a, real lo, real hi) {
  return unary(a, [lo, hi](real v) { return std::clamp(v, lo, hi); },
               [lo, hi](real x, real) { return (x > lo && x < hi) ? real(1) : real(0); });
}

Tensor sum(const Tensor& a) {
  real total = 0;
  for (real v : a.data()) total += v;
  return make_result({}, {total}, {a}, [](Node& n) {
    Node& x = *n.inputs[0];
    for (auto& g : x.grad) g += n.grad[0];
  });
}

Tensor broadcast(const Tensor& a, const Shape& shape) {
  if (a.numel() != 1) throw ConfigError("broadcast: expected a one-element tensor, got " + shape_str(a.shape()));
  const std::size_t n = shape_numel(shape);
  return make_result(shape, std::vector<real>(n, a.data()[0]), {a}, [](Node& r) {
    real total = 0;
    for (real g : r.grad) total += g;
    r.inputs[0]->grad[0] += total;
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ConfigError("mean: empty tensor");
  return scale(sum(a), real(1) / static_cast<real>(a.numel()));
}

Tensor sum_rows(const Tensor& a) {
  require_rank(a, 2, "sum_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  auto x = a.data();
  std::vector<real> out(rows, real(0));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i] += x[i * cols + j];
  return make_result({rows}, std::move(out), {a}, [cols](Node& n) {
    Node& x = *n.inputs[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) x.grad[i * cols + j] += n.grad[i];
  });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ConfigError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  auto x = a.data();
  return make_result(shape, std::vector<real>(x.begin(), x.end()), {a}, [](Node& n) {
    Node& in = *n.inputs[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[i] += n.grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const std::size_t rows = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) throw ConfigError("concat_cols: row count mismatch");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<real> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto x = parts[k].data();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
    offset += widths[k];
  }
  return make_result({rows, total}, std::move(out), parts, [widths, rows, total](Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      Node& in = *n.inputs[k];
      if (in.requires_grad) {
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) in.grad[i * widths[k] + j] += n.grad[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Tensor column(const Tensor& a, std::size_t j) {
  require_rank(a, 2, "column");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (j >= cols) throw ConfigError("column: index out of range");
  auto x = a.data();
  std::vector<real> out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = x[i * cols + j];
  return make_result({rows}, std::move(out), {a}, [j, cols](Node& n) {
    Node& in = *n.inputs[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[i * cols + j] += n.grad[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw ConfigError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<real> out(n * m);
  MapR(out.data(), n, m).noalias() = CMapR(a.data().data(), n, k) * CMapR(b.data().data(), k, m);
  return make_result({n, m}, std::move(out), {a, b}, [n, k, m](Node& node) {
    Node& l = *node.inputs[0];
    Node& r = *node.inputs[1];
    CMapR g(node.grad.data(), n, m);
    if (l.requires_grad) MapR(l.grad.data(), n, k).noalias() += g * CMapR(r.data.data(), k, m).transpose();
    if (r.requires_grad) MapR(r.grad.data(), k, m).noalias() += CMapR(l.data.data(), n, k).transpose() * g;
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const std::size_t n = x.dim(0), d = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != d) {
    throw ConfigError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                      shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{o}) throw ConfigError("linear: bias must have shape [" + std::to_string(o) + "]");
  std::vector<real> out(n * o);
  MapR y(out.data(), n, o);
  y.noalias() = CMapR(x.data().data(), n, d) * CMapR(weight.data().data(), o, d).transpose();
  if (has_bias) {
    Eigen::Map<const Eigen::Matrix<real, 1, Eigen::Dynamic>> b(bias.data().data(), static_cast<Eigen::Index>(o));
    y.rowwise() += b;
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result({n, o}, std::move(out), std::move(inputs), [n, d, o](Node& node) {
    Node& in = *node.inputs[0];
    Node& w = *node.inputs[1];
    CMapR g(node.grad.data(), n, o);
    if (in.requires_grad) MapR(in.grad.data(), n, d).noalias() += g * CMapR(w.data.data(), o, d);
    if (w.requires_grad) MapR(w.grad.data(), o, d).noalias() += g.transpose() * CMapR(in.data.data(), n, d);
    if (node.inputs.size() > 2 && node.inputs[2]->requires_grad) {
      Eigen::Map<Eigen::Matrix<real, 1, Eigen::Dynamic>> gb(node.inputs[2]->grad.data(), static_cast<Eigen::Index>(o));
      gb += g.colwise().sum();
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t spatial() const { return ho * wo; }
};

// cols[(ci*kh + ki)*kw + kj, oy*wo + ox] = input[ci, oy*s + ki - p, ox*s + kj - p] (0 outside).
void im2col(const real* img, const ConvGeometry& g, real* cols) {
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        real* row = cols + ((ci * g.kh + ki) * g.kw + kj) * g.spatial();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.h) &&
                                ix < static_cast<std::ptrdiff_t>(g.w);
            row[oy * g.wo + ox] = inside ? img[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] : real(0);
          }
        }
      }
    }
  }
}

void col2im_add(const real* cols, const ConvGeometry& g, real* img) {
  for (std::size_t ci = 0; ci < g.c; ++ci) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const real* row = cols + ((ci * g.kh + ki) * g.kw + kj) * g.spatial();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            img[(ci * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.f = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (kernel.dim(1) != g.c) {
    throw ConfigError("conv2d: kernel " + shape_str(kernel.shape()) + " does not match input channels of " +
                      shape_str(input.shape()));
  }
  if (g.h + 2 * padding < g.kh || g.w + 2 * padding < g.kw) {
    throw ConfigError("conv2d: kernel larger than padded input " + shape_str(input.shape()));
  }
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{g.f}) throw ConfigError("conv2d: bias must have one entry per filter");

  std::vector<real> out(g.n * g.f * g.spatial());
  std::vector<real> cols(g.patch() * g.spatial());
  CMapR wmat(kernel.data().data(), g.f, g.patch());
  const real* in = input.data().data();
  for (std::size_t b = 0; b < g.n; ++b) {
    im2col(in + b * g.c * g.h * g.w, g, cols.data());
    MapR y(out.data() + b * g.f * g.spatial(), g.f, g.spatial());
    y.noalias() = wmat * CMapR(cols.data(), g.patch(), g.spatial());
    if (has_bias) {
      auto bv = bias.data();
      for (std::size_t fi = 0; fi < g.f; ++fi) y.row(fi).array() += bv[fi];
    }
  }
  std::vector<Tensor> inputs{input, kernel};
  if (has_bias) inputs.push_back(bias);
  return make_result({g.n, g.f, g.ho, g.wo}, std::move(out), std::move(inputs), [g](Node& node) {
    Node& x = *node.inputs[0];
    Node& k = *node.inputs[1];
    Node* b = node.inputs.size() > 2 ? node.inputs[2].get() : nullptr;
    std::vector<real> cols(g.patch() * g.spatial());
    std::vector<real> dcols(g.patch() * g.spatial());
    CMapR wmat(k.data.data(), g.f, g.patch());
    for (std::size_t s = 0; s < g.n; ++s) {
      CMapR dy(node.grad.data() + s * g.f * g.spatial(), g.f, g.spatial());
      if (k.requires_grad) {
        im2col(x.data.data() + s * g.c * g.h * g.w, g, cols.data());
        MapR(k.grad.data(), g.f, g.patch()).noalias() += dy * CMapR(cols.data(), g.patch(), g.spatial()).transpose();
      }
      if (x.requires_grad) {
        MapR(dcols.data(), g.patch(), g.spatial()).noalias() = wmat.transpose() * dy;
        col2im_add(dcols.data(), g, x.grad.data() + s * g.c * g.h * g.w);
      }
      if (b && b->requires_grad) {
        for (std::size_t fi = 0; fi < g.f; ++fi) b->grad[fi] += dy.row(fi).sum();
      }
    }
  });
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank(input, 4, "global_avg_pool");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (hw == 0) throw ConfigError("global_avg_pool: empty spatial extent");
  auto x = input.data();
  std::vector<real> out(n * c);
  for (std::size_t i = 0; i < n * c; ++i) {
    real total = 0;
    for (std::size_t j = 0; j < hw; ++j) total += x[i * hw + j];
    out[i] = total / static_cast<real>(hw);
  }
  return make_result({n, c}, std::move(out), {input}, [hw](Node& node) {
    Node& in = *node.inputs[0];
    const real inv = real(1) / static_cast<real>(hw);
    for (std::size_t i = 0; i < node.grad.size(); ++i)
      for (std::size_t j = 0; j < hw; ++j) in.grad[i * hw + j] += node.grad[i] * inv;
  });
}

namespace {

std::vector<real> softmax_rows(std::span<const real> x, std::size_t rows, std::size_t cols) {
  std::vector<real> p(x.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const real* row = x.data() + i * cols;
    const real peak = *std::max_element(row, row + cols);
    real total = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      p[i * cols + j] = std::exp(row[j] - peak);
      total += p[i * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) p[i * cols + j] /= total;
  }
  return p;
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  auto p = softmax_rows(logits.data(), rows, cols);
  return make_result({rows, cols}, std::move(p), {logits}, [rows, cols](Node& node) {
    Node& in = *node.inputs[0];
    for (std::size_t i = 0; i < rows; ++i) {
      real dot = 0;
      for (std::size_t j = 0; j < cols; ++j) dot += node.grad[i * cols + j] * node.data[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j)
        in.grad[i * cols + j] += node.data[i * cols + j] * (node.grad[i * cols + j] - dot);
    }
  });
}

CrossEntropyResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (cols < 2) throw ConfigError("softmax_cross_entropy: need at least 2 classes");
  if (labels.size() != rows) throw ConfigError("softmax_cross_entropy: one label per row required");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= cols) {
      throw InputError("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " +
                       std::to_string(cols) + ")");
    }
  }
  auto x = logits.data();
  auto p = softmax_rows(x, rows, cols);
  real loss = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const real* row = x.data() + i * cols;
    const real peak = *std::max_element(row, row + cols);
    real total = 0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(row[j] - peak);
    const real log_z = peak + std::log(total);
    loss += log_z - row[static_cast<std::size_t>(labels[i])];
  }
  loss /= static_cast<real>(rows);
  if (!std::isfinite(loss)) throw NumericError("softmax_cross_entropy: non-finite loss");
  Tensor probs = Tensor::from({rows, cols}, p);
  Tensor out = make_result({}, {loss}, {logits}, [p = std::move(p), labels, rows, cols](Node& node) {
    Node& in = *node.inputs[0];
    const real g = node.grad[0] / static_cast<real>(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const real target = static_cast<std::size_t>(labels[i]) == j ? real(1) : real(0);
        in.grad[i * cols + j] += g * (p[i * cols + j] - target);
      }
    }
  });
  return {out, probs};
}

}  // namespace gfnet
