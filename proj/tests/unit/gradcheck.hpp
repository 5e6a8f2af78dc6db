#pragma once
// Central finite-difference oracle. Only forward values are used, so it is
// independent of the backward rules it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gfnet/numcore/tensor.hpp"

namespace gradcheck {

struct Report {
  double max_rel_error = 0;
  std::size_t checked = 0;
};

/// Compares analytic grads of `loss_fn` w.r.t. `params` against central differences.
/// `per_tensor` limits how many coordinates are sampled from each tensor (0 = all).
inline Report run(const std::function<gfnet::Tensor()>& loss_fn, std::vector<gfnet::Tensor> params,
                  double step = 1e-6, std::size_t per_tensor = 0, unsigned seed = 1) {
  for (auto& p : params) p.zero_grad();
  loss_fn().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  Report report;
  std::mt19937 rng(seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (per_tensor && idx.size() > per_tensor) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(per_tensor);
    }
    for (std::size_t i : idx) {
      const gfnet::real saved = data[i];
      data[i] = saved + static_cast<gfnet::real>(step);
      const double up = loss_fn().item();
      data[i] = saved - static_cast<gfnet::real>(step);
      const double down = loss_fn().item();
      data[i] = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
      ++report.checked;
    }
  }
  return report;
}

/// One scalar coordinate of a parameter tensor.
struct Coordinate {
  gfnet::Tensor tensor;
  std::size_t index = 0;
};

/// Same comparison restricted to hand-picked coordinates, for losses too costly to probe everywhere.
inline Report run_slice(const std::function<gfnet::Tensor()>& loss_fn, std::vector<Coordinate> slice,
                        double step = 1e-6) {
  for (auto& c : slice) c.tensor.zero_grad();
  loss_fn().backward();
  std::vector<double> analytic;
  for (auto& c : slice) analytic.push_back(c.tensor.grad()[c.index]);
  Report report;
  for (std::size_t k = 0; k < slice.size(); ++k) {
    auto data = slice[k].tensor.mutable_data();
    const std::size_t i = slice[k].index;
    const gfnet::real saved = data[i];
    data[i] = saved + static_cast<gfnet::real>(step);
    const double up = loss_fn().item();
    data[i] = saved - static_cast<gfnet::real>(step);
    const double down = loss_fn().item();
    data[i] = saved;
    const double numeric = (up - down) / (2 * step);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(analytic[k] - numeric) / denom);
    ++report.checked;
  }
  return report;
}

}  // namespace gradcheck
