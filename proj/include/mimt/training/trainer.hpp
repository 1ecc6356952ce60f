// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mimt/analysis/metrics.hpp"
#include "mimt/data/batching.hpp"
#include "mimt/model/checkpoint.hpp"
#include "mimt/model/decode.hpp"
#include "mimt/training/optim.hpp"

namespace mimt::training {

using model::ModelParams;
using numerics::Rng;

struct TrainData {
  data::Vocab vocab;
  std::vector<data::ParallelExample> train;
  std::vector<data::ParallelExample> dev;
};

struct DevScores {
  std::map<std::size_t, double> bleu;  // by domain index
  double average = 0.0;
};

inline constexpr std::size_t kDevChunk = 64;

// Greedy-decodes the dev split per domain and scores it with corpus BLEU.
// Output length is capped at min(max_length, 2 * source length + 5).
inline DevScores evaluate_dev(const ModelParams& p, const std::vector<data::ParallelExample>& dev,
                              const data::Vocab& vocab, Mode mode, std::size_t max_length) {
  if (dev.empty()) throw DataError("dev split is empty");
  std::map<std::size_t, std::vector<const data::ParallelExample*>> by_domain;
  for (const auto& ex : dev) by_domain[ex.domain.index].push_back(&ex);
  DevScores out;
  for (const auto& [domain, examples] : by_domain) {
    std::vector<analysis::Sentence> hyps, refs;
    for (std::size_t start = 0; start < examples.size(); start += kDevChunk) {
      const std::size_t end = std::min(examples.size(), start + kDevChunk);
      std::vector<const std::vector<int>*> sources;
      std::size_t longest = 0;
      for (std::size_t i = start; i < end; ++i) {
        sources.push_back(&examples[i]->source);
        longest = std::max(longest, examples[i]->source.size());
      }
      const std::size_t cap = std::min({max_length, 2 * longest + 5, p.config.max_positions});
      const auto decoded = model::greedy_decode_batch(p, sources, selector_for(mode, domain), cap);
      for (std::size_t i = start; i < end; ++i) {
        hyps.push_back(vocab.decode(decoded[i - start]));
        refs.push_back(vocab.decode(examples[i]->target));
      }
    }
    out.bleu[domain] = analysis::corpus_bleu(hyps, refs).score;
  }
  double sum = 0.0;
  for (const auto& [d, s] : out.bleu) sum += s;
  out.average = sum / static_cast<double>(out.bleu.size());
  return out;
}

struct LossSums {
  double l_da = 0.0;
  double l_g = 0.0;
  double l_mi = 0.0;
  double total = 0.0;
  std::size_t tokens = 0;

  void add(const objective::LossBreakdown& b) {
    l_da += b.l_da;
    l_g += b.l_g;
    l_mi += b.l_mi;
    total += b.total;
    tokens += b.tokens;
  }
};

inline void to_json(nlohmann::json& j, const LossSums& s) {
  j = {{"l_da", s.l_da}, {"l_g", s.l_g}, {"l_mi", s.l_mi}, {"total", s.total}, {"tokens", s.tokens}};
}
inline void from_json(const nlohmann::json& j, LossSums& s) {
  s.l_da = j.at("l_da").get<double>();
  s.l_g = j.at("l_g").get<double>();
  s.l_mi = j.at("l_mi").get<double>();
  s.total = j.at("total").get<double>();
  s.tokens = j.at("tokens").get<std::size_t>();
}

struct EvalRecord {
  std::size_t step = 0;
  DevScores dev;
  LossSums losses;  // sums since the previous evaluation
};

inline void to_json(nlohmann::json& j, const EvalRecord& r) {
  nlohmann::json per_domain = nlohmann::json::object();
  for (const auto& [d, s] : r.dev.bleu) per_domain[std::to_string(d)] = s;
  const double n = r.losses.tokens ? static_cast<double>(r.losses.tokens) : 1.0;
  j = {{"step", r.step},
       {"dev_bleu", per_domain},
       {"dev_bleu_average", r.dev.average},
       {"loss_per_token", {{"l_da", r.losses.l_da / n}, {"l_g", r.losses.l_g / n}, {"l_mi", r.losses.l_mi / n},
                           {"total", r.losses.total / n}}},
       {"loss_sums", r.losses}};
}
inline void from_json(const nlohmann::json& j, EvalRecord& r) {
  r.step = j.at("step").get<std::size_t>();
  for (const auto& [d, s] : j.at("dev_bleu").items()) r.dev.bleu[std::stoul(d)] = s.get<double>();
  r.dev.average = j.at("dev_bleu_average").get<double>();
  r.losses = j.at("loss_sums").get<LossSums>();
}

struct TrainHistory {
  std::vector<EvalRecord> records;
  std::size_t best_step = 0;
  double best_score = 0.0;
  std::size_t steps = 0;
  std::size_t tokens = 0;  // non-PAD target tokens consumed
  double train_seconds = 0.0;
  std::int64_t peak_bytes = 0;
  std::string status = "running";  // completed | early_stopped | diverged
  std::string diagnostic;
};

inline void to_json(nlohmann::json& j, const TrainHistory& h) {
  j = {{"records", h.records},      {"best_step", h.best_step},         {"best_score", h.best_score},
       {"steps", h.steps},          {"tokens", h.tokens},               {"train_seconds", h.train_seconds},
       {"peak_bytes", h.peak_bytes}, {"status", h.status},              {"diagnostic", h.diagnostic}};
}
inline void from_json(const nlohmann::json& j, TrainHistory& h) {
  h.records = j.at("records").get<std::vector<EvalRecord>>();
  h.best_step = j.at("best_step").get<std::size_t>();
  h.best_score = j.at("best_score").get<double>();
  h.steps = j.at("steps").get<std::size_t>();
  h.tokens = j.at("tokens").get<std::size_t>();
  h.train_seconds = j.at("train_seconds").get<double>();
  h.peak_bytes = j.at("peak_bytes").get<std::int64_t>();
  h.status = j.at("status").get<std::string>();
  h.diagnostic = j.at("diagnostic").get<std::string>();
}

struct CostReport {
  std::size_t iterations_to_best = 0;
  std::size_t steps = 0;
  std::int64_t peak_bytes = 0;
  double words_per_second = 0.0;
  double updates_per_second = 0.0;
};

inline void to_json(nlohmann::json& j, const CostReport& c) {
  j = {{"iterations_to_best", c.iterations_to_best},
       {"steps", c.steps},
       {"peak_bytes", c.peak_bytes},
       {"words_per_second", c.words_per_second},
       {"updates_per_second", c.updates_per_second}};
}

// Throughput counts only update steps; dev evaluation time is excluded.
inline CostReport cost_counters(const TrainHistory& h) {
  CostReport c;
  c.iterations_to_best = h.best_step;
  c.steps = h.steps;
  c.peak_bytes = h.peak_bytes;
  if (h.train_seconds > 0.0) {
    c.words_per_second = static_cast<double>(h.tokens) / h.train_seconds;
    c.updates_per_second = static_cast<double>(h.steps) / h.train_seconds;
  }
  return c;
}

struct TrainHooks {
  std::function<void(const nlohmann::json&)> on_log;
  std::function<void(const EvalRecord&, bool improved)> on_eval;
};

// Random streams derived from the run seed.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kBatchStream = 2;
inline constexpr std::uint64_t kDropoutStream = 3;

class Trainer {
 public:
  Trainer(ModelParams initial, const TrainData& data, TrainConfig cfg, TrainHooks hooks = {})
      : params_(initial.clone()), data_(data), cfg_(std::move(cfg)), hooks_(std::move(hooks)) {
    cfg_.validate();
    check_inputs();
    named_ = params_.named();
    adam_ = AdamState::for_params(named_);
    early_.patience = cfg_.patience;
    numerics::MemoryMeter::local().reset_peak();
  }

  const TrainConfig& config() const { return cfg_; }
  const TrainHistory& history() const { return history_; }
  const ModelParams& params() const { return params_; }
  std::size_t step_count() const { return step_; }
  bool done() const { return history_.status != "running"; }

  // The best-scoring params so far, or the current ones before any eval.
  const ModelParams& best_params() const { return best_ ? *best_ : params_; }

  // Runs until finished, or until `stop_after` total steps if nonzero.
  const TrainHistory& run(std::size_t stop_after = 0) {
    while (!done() && (stop_after == 0 || step_ < stop_after)) step();
    return history_;
  }

  void step() {
    if (done()) return;
    ensure_epoch();
    const data::Batch& batch = batches_[batch_pos_];
    const auto t0 = std::chrono::steady_clock::now();
    objective::LossBreakdown breakdown;
    try {
      breakdown = update(batch);
    } catch (const NumericError& e) {
      history_.status = "diverged";
      history_.diagnostic = "step " + std::to_string(step_ + 1) + ": " + e.what();
      return;
    }
    history_.train_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history_.peak_bytes = std::max(history_.peak_bytes, numerics::MemoryMeter::local().peak());

    ++step_;
    ++batch_pos_;
    history_.steps = step_;
    history_.tokens += breakdown.tokens;
    since_eval_.add(breakdown);
    if (step_ % cfg_.log_interval == 0 && hooks_.on_log)
      hooks_.on_log({{"step", step_},
                     {"l_da", breakdown.l_da},
                     {"l_g", breakdown.l_g},
                     {"l_mi", breakdown.l_mi},
                     {"total", breakdown.total},
                     {"tokens", breakdown.tokens},
                     {"domain", batch.domain.index}});
    if (batch_pos_ == batches_.size()) {
      ++epoch_;
      batch_pos_ = 0;
    }
    if (step_ % cfg_.eval_interval == 0 || step_ == cfg_.max_steps) evaluate();
    if (!done() && step_ >= cfg_.max_steps) history_.status = "completed";
  }

  // Full training state: params, best params, Adam moments, counters.
  model::CheckpointFile snapshot() const {
    model::CheckpointFile ckpt;
    nlohmann::json meta;
    meta["kind"] = "train_state";
    meta["model"] = params_.config;
    meta["train"] = cfg_;
    meta["step"] = step_;
    meta["epoch"] = epoch_;
    meta["batch_position"] = batch_pos_;
    meta["rng"] = Rng(cfg_.seed).split(kBatchStream).split(epoch_).state();
    meta["early_stop"] = early_;
    meta["history"] = history_;
    meta["since_eval"] = since_eval_;
    meta["adam_steps"] = adam_.steps;
    meta["has_best"] = best_.has_value();
    ckpt.meta = meta;
    model::store_params(ckpt, params_, "param.");
    if (best_) model::store_params(ckpt, *best_, "best.");
    for (std::size_t i = 0; i < named_.size(); ++i) {
      ckpt.add("adam.m." + named_[i].first, {adam_.m[i].size()}, adam_.m[i]);
      ckpt.add("adam.v." + named_[i].first, {adam_.v[i].size()}, adam_.v[i]);
    }
    return ckpt;
  }

  void save_state(const std::string& path) const { model::write_checkpoint(path, snapshot()); }

  void restore(const model::CheckpointFile& ckpt) {
    const auto& meta = ckpt.meta;
    if (meta.value("kind", std::string()) != "train_state") throw DataError("checkpoint is not a training state");
    const nlohmann::json saved_cfg = meta.at("train"), mine = cfg_;
    if (saved_cfg != mine) throw ConfigError("training state was saved with a different training config");
    params_.assign_from(model::load_params(ckpt, params_.config, "param."));
    if (meta.at("has_best").get<bool>())
      best_ = model::load_params(ckpt, params_.config, "best.");
    else
      best_.reset();
    step_ = meta.at("step").get<std::size_t>();
    epoch_ = meta.at("epoch").get<std::size_t>();
    batch_pos_ = meta.at("batch_position").get<std::size_t>();
    early_ = meta.at("early_stop").get<EarlyStopState>();
    history_ = meta.at("history").get<TrainHistory>();
    since_eval_ = meta.at("since_eval").get<LossSums>();
    adam_.steps = meta.at("adam_steps").get<std::vector<std::size_t>>();
    for (std::size_t i = 0; i < named_.size(); ++i) {
      adam_.m[i] = ckpt.get("adam.m." + named_[i].first).second;
      adam_.v[i] = ckpt.get("adam.v." + named_[i].first).second;
    }
    batches_epoch_.reset();
  }

  void load_state(const std::string& path) { restore(model::read_checkpoint(path)); }

 private:
  void check_inputs() const {
    if (data_.train.empty()) throw DataError("training split is empty");
    if (params_.config.vocab_size != data_.vocab.size())
      throw ConfigError("model vocab_size " + std::to_string(params_.config.vocab_size) + " differs from vocabulary size " +
                        std::to_string(data_.vocab.size()));
    std::map<std::size_t, bool> has_dev;
    for (const auto& ex : data_.dev) has_dev[ex.domain.index] = true;
    for (const auto* split : {&data_.train, &data_.dev})
      for (const auto& ex : *split) {
        if (uses_domain_adapters(cfg_.mode) && ex.domain.index >= params_.config.n_domains)
          throw ConfigError("example from domain " + std::to_string(ex.domain.index) + " but the model has " +
                            std::to_string(params_.config.n_domains) + " domain adapters");
        if (cfg_.mode == Mode::DomainTag &&
            (!data_.vocab.has_domain_tags() || ex.source.empty() || ex.source.front() != data_.vocab.domain_tag(ex.domain)))
          throw ConfigError("domain-tag mode needs every source to start with its domain tag");
      }
    for (const auto& ex : data_.train)
      if (!has_dev.count(ex.domain.index))
        throw DataError("domain " + std::to_string(ex.domain.index) + " has no dev examples");
  }

  void ensure_epoch() {
    if (batches_epoch_ == epoch_) return;
    Rng rng = Rng(cfg_.seed).split(kBatchStream).split(epoch_);
    batches_ = data::make_batches(data_.train, cfg_.max_tokens, rng);
    batches_epoch_ = epoch_;
    if (batch_pos_ >= batches_.size()) throw DataError("training state points past the end of its epoch");
  }

  objective::LossBreakdown update(const data::Batch& batch) {
    numerics::Tape tape;
    numerics::TapeScope scope(tape);
    const model::ForwardOptions opts{true, Rng(cfg_.seed).split(kDropoutStream).split(step_).seed()};
    Tensor logp_da = model::forward(params_, batch, selector_for(cfg_.mode, batch.domain.index), opts);
    std::optional<Tensor> logp_g;
    if (cfg_.runs_general_pass()) logp_g = model::forward(params_, batch, model::AdapterSelector::general(), opts);
    auto out = objective::total_loss(logp_da, logp_g, batch.target, cfg_.effective_objective(), batch.target_len);
    if (!std::isfinite(out.breakdown.total)) throw NumericError("loss is not finite");
    const auto grads = numerics::backward(tape, out.loss);
    adam_step(named_, grads, adam_, cfg_.adam);
    return out.breakdown;
  }

  void evaluate() {
    EvalRecord rec;
    rec.step = step_;
    rec.dev = evaluate_dev(params_, data_.dev, data_.vocab, cfg_.mode, cfg_.dev_max_length);
    rec.losses = since_eval_;
    since_eval_ = {};
    const bool improved = early_.update(rec.dev.average);
    if (improved) {
      best_ = params_.clone();
      history_.best_step = step_;
      history_.best_score = rec.dev.average;
    }
    history_.records.push_back(rec);
    if (hooks_.on_eval) hooks_.on_eval(rec, improved);
    if (early_.should_stop()) history_.status = "early_stopped";
  }

  ModelParams params_;
  const TrainData& data_;
  TrainConfig cfg_;
  TrainHooks hooks_;
  NamedTensors named_;
  AdamState adam_;
  EarlyStopState early_;
  TrainHistory history_;
  std::optional<ModelParams> best_;
  LossSums since_eval_;
  std::size_t step_ = 0;
  std::size_t epoch_ = 0;
  std::size_t batch_pos_ = 0;
  std::vector<data::Batch> batches_;
  std::optional<std::size_t> batches_epoch_;
};

struct TrainResult {
  ModelParams best;
  TrainHistory history;
};

inline TrainResult train(const ModelParams& initial, const TrainData& data, const TrainConfig& cfg,
                         TrainHooks hooks = {}) {
  Trainer t(initial, data, cfg, std::move(hooks));
  t.run();
  return {t.best_params().clone(), t.history()};
}

}  // namespace mimt::training
