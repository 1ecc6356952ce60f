// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "mimt/model/config.hpp"
#include "mimt/objective/objective.hpp"

namespace mimt::training {

enum class Mode { Mixed, DomainTag, DomainAdapter, OursNoMI, Ours };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::Mixed: return "mixed";
    case Mode::DomainTag: return "domain-tag";
    case Mode::DomainAdapter: return "domain-adapter";
    case Mode::OursNoMI: return "ours-no-mi";
    case Mode::Ours: return "ours";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::Mixed, Mode::DomainTag, Mode::DomainAdapter, Mode::OursNoMI, Mode::Ours})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown training mode '" + s + "' (known: mixed, domain-tag, domain-adapter, ours-no-mi, ours)");
}

// Whether a mode routes every batch through its domain adapter.
inline bool uses_domain_adapters(Mode m) { return m != Mode::Mixed && m != Mode::DomainTag; }
inline bool uses_general_pass(Mode m) { return m == Mode::OursNoMI || m == Mode::Ours; }

inline model::AdapterSelector selector_for(Mode m, std::size_t domain) {
  return uses_domain_adapters(m) ? model::AdapterSelector::domain(domain) : model::AdapterSelector::none();
}

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  }
};

struct TrainConfig {
  Mode mode = Mode::Ours;
  AdamConfig adam;
  std::string lr_schedule = "constant";
  std::size_t max_tokens = 1024;
  std::size_t patience = 10;
  std::size_t eval_interval = 200;
  std::size_t max_steps = 4000;
  std::size_t log_interval = 1;
  std::size_t dev_max_length = 64;
  objective::ObjectiveConfig objective;
  // Run the general-adapter pass in the dual-pass modes. Turning it off with
  // both lambdas at zero reduces Ours to DomainAdapter.
  bool general_pass = true;
  std::uint64_t seed = 1;

  void validate() const {
    adam.validate();
    objective.validate();
    if (lr_schedule != "constant") throw ConfigError("unknown lr_schedule '" + lr_schedule + "' (known: constant)");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
    if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
    if (max_steps == 0) throw ConfigError("max_steps must be positive");
    if (log_interval == 0) throw ConfigError("log_interval must be positive");
    if (dev_max_length == 0) throw ConfigError("dev_max_length must be positive");
  }

  // The objective the mode actually optimizes.
  objective::ObjectiveConfig effective_objective() const {
    objective::ObjectiveConfig o = objective;
    if (!uses_general_pass(mode)) o.lambda1 = o.lambda2 = 0.0;
    if (mode == Mode::OursNoMI) o.lambda2 = 0.0;
    return o;
  }
  bool runs_general_pass() const { return uses_general_pass(mode) && general_pass; }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"mode", to_string(c.mode)},
       {"lr", c.adam.lr},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"adam_eps", c.adam.eps},
       {"lr_schedule", c.lr_schedule},
       {"max_tokens", c.max_tokens},
       {"patience", c.patience},
       {"eval_interval", c.eval_interval},
       {"max_steps", c.max_steps},
       {"log_interval", c.log_interval},
       {"dev_max_length", c.dev_max_length},
       {"objective", c.objective},
       {"general_pass", c.general_pass},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.mode = parse_mode(j.value("mode", to_string(d.mode)));
  c.adam.lr = j.value("lr", d.adam.lr);
  c.adam.beta1 = j.value("beta1", d.adam.beta1);
  c.adam.beta2 = j.value("beta2", d.adam.beta2);
  c.adam.eps = j.value("adam_eps", d.adam.eps);
  c.lr_schedule = j.value("lr_schedule", d.lr_schedule);
  c.max_tokens = j.value("max_tokens", d.max_tokens);
  c.patience = j.value("patience", d.patience);
  c.eval_interval = j.value("eval_interval", d.eval_interval);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.log_interval = j.value("log_interval", d.log_interval);
  c.dev_max_length = j.value("dev_max_length", d.dev_max_length);
  c.objective = j.contains("objective") ? j.at("objective").get<objective::ObjectiveConfig>() : d.objective;
  c.general_pass = j.value("general_pass", d.general_pass);
  c.seed = j.value("seed", d.seed);
}

}  // namespace mimt::training
