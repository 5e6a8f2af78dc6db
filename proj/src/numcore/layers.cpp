#include "gfnet/numcore/layers.hpp"

#include <cmath>

#include "gfnet/numcore/ops.hpp"
#include "gfnet/util/errors.hpp"

namespace gfnet {

void init_uniform(Tensor& t, real bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  for (auto& v : t.mutable_data()) v = static_cast<real>(dist(rng));
}

void init_kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  init_uniform(t, static_cast<real>(std::sqrt(6.0 / static_cast<double>(fan_in))), rng);
}

GruState GruState::zeros(std::size_t batch, std::size_t hidden_dim) {
  return {Tensor::zeros({batch, hidden_dim})};
}

GruParams GruParams::create(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  const real bound = static_cast<real>(1.0 / std::sqrt(static_cast<double>(hidden_dim)));
  auto make = [&](const Shape& s) {
    Tensor t = Tensor::zeros(s, true);
    init_uniform(t, bound, rng);
    return t;
  };
  GruParams p;
  p.w_ir = make({hidden_dim, input_dim});
  p.w_iz = make({hidden_dim, input_dim});
  p.w_in = make({hidden_dim, input_dim});
  p.w_hr = make({hidden_dim, hidden_dim});
  p.w_hz = make({hidden_dim, hidden_dim});
  p.w_hn = make({hidden_dim, hidden_dim});
  p.b_ir = make({hidden_dim});
  p.b_iz = make({hidden_dim});
  p.b_in = make({hidden_dim});
  p.b_hr = make({hidden_dim});
  p.b_hz = make({hidden_dim});
  p.b_hn = make({hidden_dim});
  return p;
}

void GruParams::append_to(ParamList& params, const std::string& prefix) const {
  params.emplace_back(prefix + ".w_ir", w_ir);
  params.emplace_back(prefix + ".w_iz", w_iz);
  params.emplace_back(prefix + ".w_in", w_in);
  params.emplace_back(prefix + ".w_hr", w_hr);
  params.emplace_back(prefix + ".w_hz", w_hz);
  params.emplace_back(prefix + ".w_hn", w_hn);
  params.emplace_back(prefix + ".b_ir", b_ir);
  params.emplace_back(prefix + ".b_iz", b_iz);
  params.emplace_back(prefix + ".b_in", b_in);
  params.emplace_back(prefix + ".b_hr", b_hr);
  params.emplace_back(prefix + ".b_hz", b_hz);
  params.emplace_back(prefix + ".b_hn", b_hn);
}

GruState gru_cell(const Tensor& x, const GruState& h, const GruParams& p) {
  if (x.rank() != 2 || x.dim(1) != p.input_dim()) {
    throw ConfigError("gru_cell: input " + shape_str(x.shape()) + " does not match input_dim " +
                      std::to_string(p.input_dim()));
  }
  if (h.hidden.rank() != 2 || h.hidden.dim(0) != x.dim(0) || h.hidden.dim(1) != p.hidden_dim()) {
    throw ConfigError("gru_cell: hidden state " + shape_str(h.hidden.shape()) + " does not match");
  }
  const Tensor r = sigmoid(add(linear(x, p.w_ir, p.b_ir), linear(h.hidden, p.w_hr, p.b_hr)));
  const Tensor z = sigmoid(add(linear(x, p.w_iz, p.b_iz), linear(h.hidden, p.w_hz, p.b_hz)));
  const Tensor n = tanh(add(linear(x, p.w_in, p.b_in), mul(r, linear(h.hidden, p.w_hn, p.b_hn))));
  return {add(mul(one_minus(z), n), mul(z, h.hidden))};
}

}  // namespace gfnet
