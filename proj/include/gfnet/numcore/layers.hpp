#pragma once

#include <cstddef>
#include "gfnet/util/rng.hpp"
#include <string>
#include <utility>
#include <vector>

#include "gfnet/numcore/tensor.hpp"

namespace gfnet {


/// Named parameter list; order is the serialization order.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

/// Uniform(-bound, bound) fill, drawn in flat order.
void init_uniform(Tensor& t, real bound, Rng& rng);
/// He/Kaiming uniform for ReLU layers: bound = sqrt(6 / fan_in).
void init_kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

/// Hidden activations of a GRU, one row per sample.
struct GruState {
  Tensor hidden;  // [N, H]

  static GruState zeros(std::size_t batch, std::size_t hidden_dim);
};

/// Gate weights kept separate per gate (reset r, update z, candidate n).
struct GruParams {
  Tensor w_ir, w_iz, w_in;  // [H, D]
  Tensor w_hr, w_hz, w_hn;  // [H, H]
  Tensor b_ir, b_iz, b_in;  // [H]
  Tensor b_hr, b_hz, b_hn;  // [H]

  static GruParams create(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
  std::size_t input_dim() const { return w_ir.dim(1); }
  std::size_t hidden_dim() const { return w_ir.dim(0); }
  void append_to(ParamList& params, const std::string& prefix) const;
};

/// r = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 − z) ⊙ n + z ⊙ h
GruState gru_cell(const Tensor& x, const GruState& h, const GruParams& p);

}  // namespace gfnet
