// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "mimt/numerics/autograd.hpp"
#include "mimt/training/config.hpp"

namespace mimt::training {

using numerics::Tensor;
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Per-tensor Adam moments. Tensors that received no gradient in a step keep
// their moments and step count, as in frameworks that skip absent grads.
struct AdamState {
  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_params(const NamedTensors& params) {
    AdamState s;
    s.steps.assign(params.size(), 0);
    for (const auto& [name, t] : params) {
      s.m.emplace_back(t.size(), 0.0);
      s.v.emplace_back(t.size(), 0.0);
    }
    return s;
  }

  bool operator==(const AdamState&) const = default;
};

// Bias-corrected Adam. Every gradient is checked before any parameter moves,
// so a failing step leaves params and state untouched.
inline void adam_step(const NamedTensors& params, const numerics::Gradients& grads, AdamState& state,
                      const AdamConfig& cfg) {
  if (state.m.size() != params.size()) throw ConfigError("adam_step: state does not match the parameter list");
  std::vector<const Tensor*> g(params.size(), nullptr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    g[i] = grads.find(params[i].second);
    if (!g[i]) continue;
    if (state.m[i].size() != params[i].second.size())
      throw ConfigError("adam_step: state for '" + params[i].first + "' has the wrong size");
    for (double x : g[i]->values())
      if (!std::isfinite(x)) throw NumericError("non-finite gradient in tensor '" + params[i].first + "'");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!g[i]) continue;
    const auto t = static_cast<double>(++state.steps[i]);
    const double c1 = 1.0 - std::pow(cfg.beta1, t), c2 = 1.0 - std::pow(cfg.beta2, t);
    auto w = Tensor(params[i].second).mutable_values();
    auto grad = g[i]->values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
      w[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
}

struct EarlyStopState {
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;
  std::size_t patience = 10;

  // Records one evaluation; true when it sets a new best.
  bool update(double score) {
    if (score > best) {
      best = score;
      since_improvement = 0;
      return true;
    }
    ++since_improvement;
    return false;
  }
  bool should_stop() const { return since_improvement >= patience; }
};

inline void to_json(nlohmann::json& j, const EarlyStopState& s) {
  j = {{"best", std::isfinite(s.best) ? nlohmann::json(s.best) : nlohmann::json(nullptr)},
       {"since_improvement", s.since_improvement},
       {"patience", s.patience}};
}

inline void from_json(const nlohmann::json& j, EarlyStopState& s) {
  s.best = j.at("best").is_null() ? -std::numeric_limits<double>::infinity() : j.at("best").get<double>();
  s.since_improvement = j.at("since_improvement").get<std::size_t>();
  s.patience = j.at("patience").get<std::size_t>();
}

}  // namespace mimt::training
