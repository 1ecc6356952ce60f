// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mimt/numerics/ops.hpp"

namespace mimt::objective {

using numerics::Tensor;

inline constexpr int kPadId = 0;
inline constexpr double kLogClamp = 1e-12;

struct ObjectiveConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double label_smoothing = 0.1;
  // The weight (1 - XMI) is a constant coefficient when set.
  bool detach_mi_weight = true;
  // p_G receives no gradient from the MI term when set.
  bool detach_general_in_mi = true;

  void validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("lambda1 and lambda2 must be nonnegative");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must lie in [0, 1)");
  }
};

inline void to_json(nlohmann::json& j, const ObjectiveConfig& c) {
  j = {{"lambda1", c.lambda1},
       {"lambda2", c.lambda2},
       {"label_smoothing", c.label_smoothing},
       {"detach_mi_weight", c.detach_mi_weight},
       {"detach_general_in_mi", c.detach_general_in_mi}};
}
inline void from_json(const nlohmann::json& j, ObjectiveConfig& c) {
  ObjectiveConfig d;
  c.lambda1 = j.value("lambda1", d.lambda1);
  c.lambda2 = j.value("lambda2", d.lambda2);
  c.label_smoothing = j.value("label_smoothing", d.label_smoothing);
  c.detach_mi_weight = j.value("detach_mi_weight", d.detach_mi_weight);
  c.detach_general_in_mi = j.value("detach_general_in_mi", d.detach_general_in_mi);
}

// Diagnostic counters, per thread.
struct ObjectiveCounters {
  std::size_t log_clamps = 0;
  std::size_t empty_mi_sequences = 0;

  static ObjectiveCounters& local() {
    thread_local ObjectiveCounters c;
    return c;
  }
};

inline void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw NumericError(std::string(what) + ": probability " + std::to_string(p) + " outside [0, 1]");
}

// Token-level XMI as the probability difference p_DA - p_G.
inline double token_xmi(double p_da, double p_g) {
  check_probability(p_da, "token_xmi");
  check_probability(p_g, "token_xmi");
  return p_da - p_g;
}

// Log-ratio form log p_DA - log p_G, used by the analysis histograms.
inline double token_xmi_log_ratio(double p_da, double p_g) {
  check_probability(p_da, "token_xmi_log_ratio");
  check_probability(p_g, "token_xmi_log_ratio");
  return std::log(std::max(p_da, kLogClamp)) - std::log(std::max(p_g, kLogClamp));
}

struct TokenXmi {
  std::size_t row = 0;
  std::size_t position = 0;
  double p_da = 0.0;
  double p_g = 0.0;
  double xmi = 0.0;
};

struct MiTerm {
  double p_da;
  double xmi;
};

inline double mi_token_loss(double p_da, double xmi) { return (1.0 - xmi) * (1.0 - p_da); }

// Sum over tokens of (1 - XMI) (1 - p_DA).
inline double mi_loss(std::span<const MiTerm> tokens) {
  if (tokens.empty()) {
    ++ObjectiveCounters::local().empty_mi_sequences;
    return 0.0;
  }
  double total = 0.0;
  for (const auto& t : tokens) {
    check_probability(t.p_da, "mi_loss");
    if (!(t.xmi >= -1.0 && t.xmi <= 1.0)) throw NumericError("mi_loss: xmi outside [-1, 1]");
    total += mi_token_loss(t.p_da, t.xmi);
  }
  return total;
}

// Cross-entropy of a probability row against (1 - eps) onehot + eps uniform.
inline double label_smoothed_nll(std::span<const double> probs, int target, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("label_smoothed_nll: epsilon must lie in [0, 1)");
  if (target < 0 || static_cast<std::size_t>(target) >= probs.size())
    throw NumericError("label_smoothed_nll: target outside the distribution");
  const double v = static_cast<double>(probs.size());
  auto safe_log = [](double p) {
    if (p < kLogClamp) {
      ++ObjectiveCounters::local().log_clamps;
      return std::log(kLogClamp);
    }
    return std::log(p);
  };
  double loss = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double q = epsilon / v + (static_cast<int>(k) == target ? 1.0 - epsilon : 0.0);
    if (q > 0.0) loss -= q * safe_log(probs[k]);
  }
  return loss;
}

struct LossBreakdown {
  double l_da = 0.0;
  double l_g = 0.0;
  double l_mi = 0.0;
  double total = 0.0;
  std::size_t tokens = 0;
  std::vector<std::size_t> sentence_tokens;

  double weighted_sum(const ObjectiveConfig& cfg) const { return l_da + cfg.lambda1 * l_g + cfg.lambda2 * l_mi; }
};

inline void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = {{"l_da", b.l_da}, {"l_g", b.l_g}, {"l_mi", b.l_mi}, {"total", b.total}, {"tokens", b.tokens}};
}

inline LossBreakdown compose(double l_da, double l_g, double l_mi, const ObjectiveConfig& cfg) {
  LossBreakdown b;
  b.l_da = l_da;
  b.l_g = l_g;
  b.l_mi = l_mi;
  b.total = b.weighted_sum(cfg);
  return b;
}

// Differentiable loss of one batch.
struct ObjectiveOutput {
  Tensor loss;  // total / tokens, what the optimizer minimizes
  LossBreakdown breakdown;
  std::vector<TokenXmi> xmi;             // non-PAD positions, row-major
  std::vector<double> mi_contributions;  // per-token L_MI terms, aligned with xmi
};

namespace detail {

inline std::vector<double> target_mask(const std::vector<int>& targets) {
  std::vector<double> mask(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) mask[i] = targets[i] == kPadId ? 0.0 : 1.0;
  return mask;
}

// Sum over non-PAD rows of the label-smoothed NLL, from log-probabilities.
inline Tensor smoothed_nll_sum(const Tensor& logp, const std::vector<int>& safe_targets, const Tensor& mask,
                               double epsilon) {
  const double v = static_cast<double>(logp.dim(1));
  Tensor gold = numerics::pick(logp, safe_targets);
  Tensor per_row = numerics::scale(gold, -(1.0 - epsilon));
  if (epsilon > 0.0) per_row = numerics::add(per_row, numerics::scale(numerics::sum_last(logp), -epsilon / v));
  return numerics::sum(numerics::mul(per_row, mask));
}

}  // namespace detail

// Computes L_DA, L_G and L_MI for a batch of teacher-forced log-probability
// rows [positions, V]. targets holds one id per row with PAD marking padding.
// logp_g may be absent when lambda1 == lambda2 == 0.
inline ObjectiveOutput total_loss(const Tensor& logp_da, const std::optional<Tensor>& logp_g,
                                  const std::vector<int>& targets, const ObjectiveConfig& cfg,
                                  std::size_t target_len = 0) {
  cfg.validate();
  if (logp_da.rank() != 2 || logp_da.dim(0) != targets.size())
    throw ShapeError("total_loss", logp_da.shape(), {targets.size()});
  if (logp_g && logp_g->shape() != logp_da.shape()) throw ShapeError("total_loss", logp_da.shape(), logp_g->shape());
  const bool need_general = cfg.lambda1 > 0.0 || cfg.lambda2 > 0.0;
  if (need_general && !logp_g) throw ConfigError("total_loss: lambda1 or lambda2 is positive but no general pass was run");

  std::vector<int> safe(targets);
  std::size_t tokens = 0;
  for (auto& t : safe) {
    if (t != kPadId) ++tokens;
    else t = 0;
  }
  if (tokens == 0) throw DataError("total_loss: batch has no target tokens");
  Tensor mask = Tensor::constant({targets.size()}, detail::target_mask(targets));
  const double eps = cfg.label_smoothing;

  ObjectiveOutput out;
  Tensor l_da = detail::smoothed_nll_sum(logp_da, safe, mask, eps);
  Tensor total = l_da;
  out.breakdown.l_da = l_da.item();

  if (logp_g) {
    Tensor l_g = detail::smoothed_nll_sum(*logp_g, safe, mask, eps);
    out.breakdown.l_g = l_g.item();
    if (cfg.lambda1 > 0.0) total = numerics::add(total, numerics::scale(l_g, cfg.lambda1));

    Tensor p_da = numerics::exp(numerics::pick(logp_da, safe));
    Tensor p_g_live = numerics::exp(numerics::pick(*logp_g, safe));
    Tensor p_g = cfg.detach_general_in_mi ? p_g_live.detach() : p_g_live;
    Tensor xmi = numerics::add(p_da, numerics::scale(p_g, -1.0));
    Tensor weight = numerics::affine(cfg.detach_mi_weight ? xmi.detach() : xmi, -1.0, 1.0);
    Tensor gap = numerics::affine(p_da, -1.0, 1.0);
    Tensor per_token = numerics::mul(numerics::mul(weight, gap), mask);
    Tensor l_mi = numerics::sum(per_token);
    out.breakdown.l_mi = l_mi.item();
    if (cfg.lambda2 > 0.0) total = numerics::add(total, numerics::scale(l_mi, cfg.lambda2));

    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i] == kPadId) continue;
      TokenXmi t;
      t.row = target_len ? i / target_len : 0;
      t.position = target_len ? i % target_len : i;
      t.p_da = p_da[i];
      t.p_g = p_g_live[i];
      t.xmi = t.p_da - t.p_g;
      out.xmi.push_back(t);
      out.mi_contributions.push_back(per_token[i]);
    }
  }

  out.breakdown.total = total.item();
  out.breakdown.tokens = tokens;
  if (target_len) {
    out.breakdown.sentence_tokens.assign(targets.size() / target_len, 0);
    for (std::size_t i = 0; i < targets.size(); ++i)
      if (targets[i] != kPadId) ++out.breakdown.sentence_tokens[i / target_len];
  }
  out.loss = numerics::scale(total, 1.0 / static_cast<double>(tokens));
  return out;
}

// A joint distribution p(d, x, y) stored densely as [D][X][Y].
struct JointTable {
  std::size_t domains = 0;
  std::size_t sources = 0;
  std::size_t targets = 0;
  std::vector<double> p;

  double at(std::size_t d, std::size_t x, std::size_t y) const { return p[(d * sources + x) * targets + y]; }
};

struct MiForms {
  double ratio_form;       // E[log p(y|x,d) / p(y|x)]
  double definition_form;  // sum p(d,x,y) log p(d,y|x) / (p(d|x) p(y|x))
};

// Conditional mutual information I(D;Y|X) by exhaustive enumeration, in the
// two algebraically equal forms.
inline MiForms discrete_mi_oracle(const JointTable& joint) {
  const std::size_t nd = joint.domains, nx = joint.sources, ny = joint.targets;
  if (nd == 0 || nx == 0 || ny == 0 || joint.p.size() != nd * nx * ny)
    throw ShapeError("discrete_mi_oracle", {nd, nx, ny}, {joint.p.size()});
  double total = 0.0;
  for (double v : joint.p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw NumericError("discrete_mi_oracle: negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw NumericError("discrete_mi_oracle: table sums to " + std::to_string(total));

  std::vector<double> px(nx, 0.0), pdx(nd * nx, 0.0), pxy(nx * ny, 0.0);
  for (std::size_t d = 0; d < nd; ++d)
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y) {
        const double v = joint.at(d, x, y);
        px[x] += v;
        pdx[d * nx + x] += v;
        pxy[x * ny + y] += v;
      }

  MiForms out{0.0, 0.0};
  for (std::size_t d = 0; d < nd; ++d)
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y) {
        const double v = joint.at(d, x, y);
        if (v == 0.0) continue;
        const double y_given_xd = v / pdx[d * nx + x];
        const double y_given_x = pxy[x * ny + y] / px[x];
        out.ratio_form += v * std::log(y_given_xd / y_given_x);
        const double dy_given_x = v / px[x];
        const double d_given_x = pdx[d * nx + x] / px[x];
        out.definition_form += v * std::log(dy_given_x / (d_given_x * y_given_x));
      }
  return out;
}

}  // namespace mimt::objective
