// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "mimt/numerics/autograd.hpp"
#include "mimt/numerics/rng.hpp"

namespace mimt::numerics {

struct GradCheckOptions {
  double step = 1e-5;
  // When set, probe this many coordinates drawn uniformly (with replacement)
  // over all parameters instead of every coordinate.
  std::optional<std::size_t> sampled_coordinates;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
};

// Compares reverse-mode gradients of `loss_fn` against central differences.
// The error per coordinate is |analytic - numeric| / max(1, |numeric|).
// `loss_fn` must rebuild its graph from the current parameter values on
// every call.
inline GradCheckResult finite_difference_check(const std::function<Tensor()>& loss_fn,
                                               std::vector<Tensor> params,
                                               const GradCheckOptions& options = {}) {
  if (!(options.step > 0.0)) throw ConfigError("finite_difference_check: step must be positive");
  if (params.empty()) throw ConfigError("finite_difference_check: no parameters");
  for (const auto& p : params)
    if (!p.is_leaf()) throw ConfigError("finite_difference_check: parameter '" + p.name() + "' is not a leaf");

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    Gradients grads = backward(tape, loss);
    for (const auto& p : params) {
      const Tensor* g = grads.find(p);
      analytic.emplace_back(g ? std::vector<double>(g->values().begin(), g->values().end())
                              : std::vector<double>(p.size(), 0.0));
    }
  }

  auto evaluate = [&]() {
    NoGradScope no_grad;
    const double v = loss_fn().item();
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite loss while probing");
    return v;
  };

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  if (options.sampled_coordinates) {
    std::size_t total = 0;
    for (const auto& p : params) total += p.size();
    Rng rng(options.seed);
    for (std::size_t s = 0; s < *options.sampled_coordinates; ++s) {
      std::size_t flat = rng.uniform_int(total);
      std::size_t t = 0;
      while (flat >= params[t].size()) flat -= params[t++].size();
      coords.emplace_back(t, flat);
    }
  } else {
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t i = 0; i < params[t].size(); ++i) coords.emplace_back(t, i);
  }

  GradCheckResult result;
  for (auto [t, i] : coords) {
    auto values = params[t].mutable_values();
    const double original = values[i];
    values[i] = original + options.step;
    const double up = evaluate();
    values[i] = original - options.step;
    const double down = evaluate();
    values[i] = original;
    const double numeric = (up - down) / (2.0 * options.step);
    const double err = std::abs(analytic[t][i] - numeric) / std::max(1.0, std::abs(numeric));
    result.max_relative_error = std::max(result.max_relative_error, err);
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace mimt::numerics
