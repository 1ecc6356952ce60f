// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "fixtures.hpp"
#include "mimt/training.hpp"

using namespace mimt;
using namespace mimt::training;
using mimt::numerics::Rng;

namespace {

data::SyntheticSpec tiny_spec(std::size_t domains = 2) {
  data::SyntheticSpec s;
  s.n_domains = domains;
  s.general_vocab = 8;
  s.ambiguous_terms = 2 * domains;
  s.ambiguous_span = 2;
  s.exclusive_per_domain = 3;
  s.min_length = 2;
  s.max_length = 5;
  s.train_per_domain = 40;
  s.dev_per_domain = 6;
  s.test_per_domain = 6;
  return s;
}

TrainData make_data(const data::SyntheticSpec& spec, std::uint64_t seed, bool tags = false) {
  const auto corpus = data::generate_synthetic(spec, Rng(seed));
  TrainData d;
  d.vocab = data::Vocab::build({&corpus.train}, 500, tags ? &corpus.domains : nullptr);
  d.train = data::encode_split(d.vocab, corpus.train, tags);
  d.dev = data::encode_split(d.vocab, corpus.dev, tags);
  return d;
}

model::ModelParams toy_model(const TrainData& d, std::size_t domains, std::uint64_t seed = 3) {
  return model::init_model(fixtures::toy_config(d.vocab.size(), domains), Rng(seed));
}

TrainConfig short_run(Mode mode, std::size_t steps = 12) {
  TrainConfig c;
  c.mode = mode;
  c.max_steps = steps;
  c.eval_interval = 4;
  c.max_tokens = 64;
  c.adam.lr = 3e-3;
  c.dev_max_length = 8;
  c.seed = 11;
  return c;
}

std::vector<std::string> run_logs(const model::ModelParams& init, const TrainData& d, const TrainConfig& c,
                                  model::ModelParams* best = nullptr) {
  std::vector<std::string> lines;
  TrainHooks hooks;
  hooks.on_log = [&](const nlohmann::json& j) { lines.push_back(j.dump()); };
  auto result = train(init, d, c, hooks);
  if (best) *best = result.best;
  return lines;
}

bool params_equal(const model::ModelParams& a, const model::ModelParams& b) {
  const auto na = a.named(), nb = b.named();
  if (na.size() != nb.size()) return false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto va = na[i].second.values(), vb = nb[i].second.values();
    if (!std::equal(va.begin(), va.end(), vb.begin(), vb.end())) return false;
  }
  return true;
}

}  // namespace

TEST(TrainConfig, DefaultsAndRoundTrip) {
  TrainConfig c;
  EXPECT_EQ(c.objective.lambda1, 1.0);
  EXPECT_EQ(c.objective.lambda2, 1.0);
  EXPECT_EQ(c.objective.label_smoothing, 0.1);
  EXPECT_EQ(c.adam.lr, 5e-4);
  EXPECT_EQ(c.adam.beta1, 0.9);
  EXPECT_EQ(c.adam.beta2, 0.98);
  EXPECT_EQ(c.adam.eps, 1e-8);
  EXPECT_EQ(c.patience, 10u);
  c.mode = Mode::DomainTag;
  c.seed = 77;
  c.objective.lambda2 = 0.5;
  const nlohmann::json j = c;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.mode, Mode::DomainTag);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.patience = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.adam.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lr_schedule = "cosine";
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_mode("tagged"), ConfigError);
}

TEST(TrainConfig, ModeDeterminesLossTerms) {
  TrainConfig c;
  for (Mode m : {Mode::Mixed, Mode::DomainTag, Mode::DomainAdapter}) {
    c.mode = m;
    EXPECT_EQ(c.effective_objective().lambda1, 0.0);
    EXPECT_EQ(c.effective_objective().lambda2, 0.0);
    EXPECT_FALSE(c.runs_general_pass());
  }
  c.mode = Mode::OursNoMI;
  EXPECT_EQ(c.effective_objective().lambda1, 1.0);
  EXPECT_EQ(c.effective_objective().lambda2, 0.0);
  EXPECT_TRUE(c.runs_general_pass());
  c.mode = Mode::Ours;
  EXPECT_EQ(c.effective_objective().lambda2, 1.0);
  EXPECT_EQ(selector_for(Mode::Mixed, 1), model::AdapterSelector::none());
  EXPECT_EQ(selector_for(Mode::DomainTag, 1), model::AdapterSelector::none());
  EXPECT_EQ(selector_for(Mode::Ours, 1), model::AdapterSelector::domain(1));
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor w = Tensor::parameter({3}, {0.5, -1.0, 2.0}, "w");
  NamedTensors params{{"w", w}};
  numerics::Gradients g;
  g.insert(w, {0.0, 0.0, 0.0});
  auto state = AdamState::for_params(params);
  adam_step(params, g, state, AdamConfig{});
  EXPECT_EQ(std::vector<double>(w.values().begin(), w.values().end()), (std::vector<double>{0.5, -1.0, 2.0}));
  EXPECT_EQ(state.m[0], (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_EQ(state.v[0], (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_EQ(state.steps[0], 1u);
}

TEST(Adam, FirstStepIsMinusLrSign) {
  Tensor w = Tensor::parameter({4}, {0.0, 0.0, 1.0, -1.0}, "w");
  NamedTensors params{{"w", w}};
  numerics::Gradients g;
  g.insert(w, {0.3, -2.0, 1e-3, -5e-2});
  auto state = AdamState::for_params(params);
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(params, g, state, cfg);
  const std::vector<double> start{0.0, 0.0, 1.0, -1.0}, sign{1.0, -1.0, 1.0, -1.0};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w[i] - start[i], -cfg.lr * sign[i], 1e-6);
}

TEST(Adam, QuadraticMatchesScalarSimulation) {
  Tensor x = Tensor::parameter({1}, {1.0}, "x");
  NamedTensors params{{"x", x}};
  auto state = AdamState::for_params(params);
  AdamConfig cfg;
  cfg.lr = 0.1;
  double sx = 1.0, m = 0.0, v = 0.0, prev = 1.0;
  for (int t = 1; t <= 10; ++t) {
    numerics::Gradients g;
    g.insert(x, {2.0 * x[0]});
    adam_step(params, g, state, cfg);
    const double grad = 2.0 * sx;
    m = 0.9 * m + 0.1 * grad;
    v = 0.98 * v + 0.02 * grad * grad;
    sx -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.98, t))) + 1e-8);
    EXPECT_NEAR(x[0], sx, 1e-15);
    EXPECT_LT(std::abs(x[0]), prev);
    prev = std::abs(x[0]);
  }
}

TEST(Adam, NonFiniteGradientNamesTensorAndChangesNothing) {
  Tensor a = Tensor::parameter({2}, {1.0, 2.0}, "a");
  Tensor b = Tensor::parameter({1}, {3.0}, "b");
  NamedTensors params{{"layer.a", a}, {"layer.b", b}};
  numerics::Gradients g;
  g.insert(a, {1.0, 1.0});
  g.insert(b, {std::numeric_limits<double>::quiet_NaN()});
  auto state = AdamState::for_params(params);
  try {
    adam_step(params, g, state, AdamConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.b"), std::string::npos);
  }
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(state.steps[0], 0u);
}

TEST(Adam, AbsentGradientSkipsTensor) {
  Tensor a = Tensor::parameter({1}, {1.0}, "a");
  Tensor b = Tensor::parameter({1}, {2.0}, "b");
  NamedTensors params{{"a", a}, {"b", b}};
  auto state = AdamState::for_params(params);
  state.m[1] = {0.5};
  numerics::Gradients g;
  g.insert(a, {1.0});
  adam_step(params, g, state, AdamConfig{});
  EXPECT_EQ(b[0], 2.0);
  EXPECT_EQ(state.m[1][0], 0.5);
  EXPECT_EQ(state.steps[1], 0u);
}

TEST(EarlyStop, StrictlyDecreasingStopsAfterPatiencePlusOne) {
  for (std::size_t patience : {1u, 3u, 10u}) {
    EarlyStopState s;
    s.patience = patience;
    std::size_t evals = 0;
    double score = 50.0;
    while (!s.should_stop()) {
      s.update(score);
      score -= 1.0;
      ++evals;
    }
    EXPECT_EQ(evals, patience + 1);
    EXPECT_EQ(s.best, 50.0);
  }
}

TEST(EarlyStop, ImprovementResetsCounter) {
  EarlyStopState s;
  s.patience = 2;
  EXPECT_TRUE(s.update(1.0));
  EXPECT_FALSE(s.update(1.0));
  EXPECT_TRUE(s.update(2.0));
  EXPECT_EQ(s.since_improvement, 0u);
  EXPECT_FALSE(s.should_stop());
}

TEST(EvaluateDev, IdentityReferencesScore100) {
  auto d = make_data(tiny_spec(), 4);
  auto p = toy_model(d, 2, 9);
  // Replace the references by the model's own greedy outputs.
  for (auto& ex : d.dev) {
    auto out = model::greedy_decode_batch(p, {&ex.source}, model::AdapterSelector::domain(ex.domain.index),
                                          std::min<std::size_t>(8, 2 * ex.source.size() + 5));
    ex.target = out[0];
    ex.target.push_back(data::Vocab::kEos);
  }
  const auto scores = evaluate_dev(p, d.dev, d.vocab, Mode::DomainAdapter, 8);
  ASSERT_EQ(scores.bleu.size(), 2u);
  for (const auto& [dom, s] : scores.bleu) EXPECT_EQ(s, 100.0) << "domain " << dom;
  EXPECT_EQ(scores.average, 100.0);
}

TEST(EvaluateDev, AverageIsUnweightedMean) {
  auto d = make_data(tiny_spec(3), 5);
  auto p = toy_model(d, 3, 2);
  // Uneven domain sizes make weighted and unweighted means differ.
  std::vector<data::ParallelExample> dev;
  for (const auto& ex : d.dev)
    if (ex.domain.index != 1 || ex.index % 2 == 0) dev.push_back(ex);
  const auto scores = evaluate_dev(p, dev, d.vocab, Mode::Ours, 8);
  ASSERT_EQ(scores.bleu.size(), 3u);
  double sum = 0.0;
  for (const auto& [dom, s] : scores.bleu) {
    std::vector<data::ParallelExample> only;
    for (const auto& ex : dev)
      if (ex.domain.index == dom) only.push_back(ex);
    const auto single = evaluate_dev(p, only, d.vocab, Mode::Ours, 8);
    EXPECT_EQ(single.average, s);
    sum += s;
  }
  EXPECT_NEAR(scores.average, sum / 3.0, 1e-12);
  EXPECT_THROW(evaluate_dev(p, {}, d.vocab, Mode::Ours, 8), DataError);
}

TEST(Train, DeterministicLogsAndParams) {
  const auto d = make_data(tiny_spec(), 1);
  const auto init = toy_model(d, 2);
  model::ModelParams best_a = init, best_b = init;
  const auto a = run_logs(init, d, short_run(Mode::Ours), &best_a);
  const auto b = run_logs(init, d, short_run(Mode::Ours), &best_b);
  ASSERT_EQ(a.size(), 12u);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(params_equal(best_a, best_b));
  auto other = short_run(Mode::Ours);
  other.seed = 12;
  EXPECT_NE(run_logs(init, d, other), a);
}

TEST(Train, LogLinesCarryBreakdown) {
  const auto d = make_data(tiny_spec(), 1);
  const auto lines = run_logs(toy_model(d, 2), d, short_run(Mode::Ours, 3));
  ASSERT_EQ(lines.size(), 3u);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto j = nlohmann::json::parse(lines[i]);
    EXPECT_EQ(j.at("step").get<std::size_t>(), i + 1);
    for (const char* key : {"l_da", "l_g", "l_mi", "total", "tokens", "domain"}) EXPECT_TRUE(j.contains(key)) << key;
    const double recomposed = j["l_da"].get<double>() + j["l_g"].get<double>() + j["l_mi"].get<double>();
    EXPECT_NEAR(j["total"].get<double>(), recomposed, 1e-9 * std::abs(recomposed));
  }
}

TEST(Train, OursWithoutGeneralPassMatchesDomainAdapter) {
  const auto d = make_data(tiny_spec(), 2);
  const auto init = toy_model(d, 2);
  auto ours = short_run(Mode::Ours);
  ours.objective.lambda1 = 0.0;
  ours.objective.lambda2 = 0.0;
  ours.general_pass = false;
  model::ModelParams pa = init, pb = init;
  const auto a = run_logs(init, d, ours, &pa);
  const auto b = run_logs(init, d, short_run(Mode::DomainAdapter), &pb);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(params_equal(pa, pb));
}

TEST(Train, GeneralAdapterUntouchedWithoutGeneralPass) {
  const auto d = make_data(tiny_spec(), 2);
  const auto init = toy_model(d, 2);
  auto r = train(init, d, short_run(Mode::DomainAdapter, 4));
  const auto before = init.adapter_tensors(init.general_index());
  const auto after = r.best.adapter_tensors(r.best.general_index());
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto x = before[i].values(), y = after[i].values();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST(Train, ResumeReproducesUninterruptedRun) {
  const auto d = make_data(tiny_spec(), 3);
  const auto init = toy_model(d, 2);
  const auto cfg = short_run(Mode::Ours, 14);

  std::vector<std::string> full_logs;
  Trainer full(init, d, cfg, {[&](const nlohmann::json& j) { full_logs.push_back(j.dump()); }, {}});
  full.run();

  const auto path = (std::filesystem::temp_directory_path() / "mimt_resume_test.ckpt").string();
  std::vector<std::string> logs;
  {
    Trainer first(init, d, cfg, {[&](const nlohmann::json& j) { logs.push_back(j.dump()); }, {}});
    first.run(7);
    ASSERT_EQ(first.step_count(), 7u);
    first.save_state(path);
  }
  Trainer second(toy_model(d, 2, 99), d, cfg, {[&](const nlohmann::json& j) { logs.push_back(j.dump()); }, {}});
  second.load_state(path);
  second.run();
  std::filesystem::remove(path);

  EXPECT_EQ(logs, full_logs);
  EXPECT_EQ(nlohmann::json(second.history().records), nlohmann::json(full.history().records));
  EXPECT_EQ(second.history().best_step, full.history().best_step);
  EXPECT_TRUE(params_equal(second.best_params(), full.best_params()));
  EXPECT_TRUE(params_equal(second.params(), full.params()));
}

TEST(Train, RestoreRejectsDifferentConfig) {
  const auto d = make_data(tiny_spec(), 3);
  const auto init = toy_model(d, 2);
  Trainer a(init, d, short_run(Mode::Ours, 4));
  a.run(2);
  auto other = short_run(Mode::Ours, 4);
  other.seed = 5;
  Trainer b(init, d, other);
  EXPECT_THROW(b.restore(a.snapshot()), ConfigError);
}

TEST(Train, BestParamsAchieveBestRecordedScore) {
  const auto d = make_data(tiny_spec(), 6);
  const auto init = toy_model(d, 2);
  auto cfg = short_run(Mode::OursNoMI, 24);
  cfg.eval_interval = 3;
  auto r = train(init, d, cfg);
  ASSERT_FALSE(r.history.records.empty());
  double best = -1.0;
  std::size_t prev_step = 0;
  for (const auto& rec : r.history.records) {
    EXPECT_GT(rec.step, prev_step);
    prev_step = rec.step;
    best = std::max(best, rec.dev.average);
  }
  EXPECT_EQ(r.history.best_score, best);
  const auto rescored = evaluate_dev(r.best, d.dev, d.vocab, cfg.mode, cfg.dev_max_length);
  EXPECT_EQ(rescored.average, best);
}

TEST(Train, DivergenceStopsWithDiagnostic) {
  const auto d = make_data(tiny_spec(), 1);
  auto init = toy_model(d, 2);
  auto bad = init.clone();
  bad.encoder[0].ffn.in.w.mutable_values()[0] = std::numeric_limits<double>::infinity();
  Trainer t(bad, d, short_run(Mode::Ours));
  t.run();
  EXPECT_EQ(t.history().status, "diverged");
  EXPECT_NE(t.history().diagnostic.find("step 1"), std::string::npos);
  EXPECT_EQ(t.step_count(), 0u);
}

TEST(Train, DomainTagRequiresTags) {
  const auto plain = make_data(tiny_spec(), 1, false);
  EXPECT_THROW(Trainer(toy_model(plain, 2), plain, short_run(Mode::DomainTag)), ConfigError);
  const auto tagged = make_data(tiny_spec(), 1, true);
  auto r = train(toy_model(tagged, 2), tagged, short_run(Mode::DomainTag, 4));
  EXPECT_EQ(r.history.steps, 4u);
}

TEST(Train, MissingDevDomainRejected) {
  auto d = make_data(tiny_spec(), 1);
  std::erase_if(d.dev, [](const data::ParallelExample& ex) { return ex.domain.index == 1; });
  EXPECT_THROW(Trainer(toy_model(d, 2), d, short_run(Mode::Ours)), DataError);
}

TEST(Train, EarlyStoppingHonoursPatience) {
  const auto d = make_data(tiny_spec(), 1);
  auto cfg = short_run(Mode::Mixed, 400);
  cfg.eval_interval = 1;
  cfg.patience = 2;
  cfg.adam.lr = 1e-9;  // scores stay flat, so only the first eval improves
  auto r = train(toy_model(d, 2), d, cfg);
  EXPECT_EQ(r.history.status, "early_stopped");
  EXPECT_EQ(r.history.records.size(), 3u);
}

TEST(CostCounters, WordsPerSecondFromLoggedTokens) {
  const auto d = make_data(tiny_spec(), 1);
  std::size_t logged = 0;
  TrainHooks hooks;
  hooks.on_log = [&](const nlohmann::json& j) { logged += j.at("tokens").get<std::size_t>(); };
  auto r = train(toy_model(d, 2), d, short_run(Mode::Ours), hooks);
  const auto c = cost_counters(r.history);
  EXPECT_EQ(r.history.tokens, logged);
  EXPECT_NEAR(c.words_per_second, static_cast<double>(logged) / r.history.train_seconds, 1e-9 * c.words_per_second);
  EXPECT_NEAR(c.updates_per_second, 12.0 / r.history.train_seconds, 1e-9 * c.updates_per_second);
  EXPECT_GT(c.peak_bytes, 0);
  EXPECT_EQ(c.iterations_to_best, r.history.best_step);
  auto again = train(toy_model(d, 2), d, short_run(Mode::Ours));
  EXPECT_EQ(cost_counters(again.history).iterations_to_best, c.iterations_to_best);
}

TEST(Train, LossDecreasesOnSmallSingleDomainCorpus) {
  data::SyntheticSpec spec;
  spec.n_domains = 1;
  spec.ambiguous_terms = 0;
  spec.train_per_domain = 200;
  spec.dev_per_domain = 5;
  spec.test_per_domain = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = make_data(spec, seed);
    auto mc = model::ModelConfig::desk();
    mc.vocab_size = d.vocab.size();
    const auto init = model::init_model(mc, Rng(seed).split(kInitStream));
    TrainConfig cfg;
    cfg.mode = Mode::Mixed;
    cfg.max_steps = 200;
    cfg.eval_interval = 1000;
    cfg.max_tokens = 128;
    cfg.dev_max_length = 4;
    cfg.seed = seed;
    std::vector<double> per_token;
    TrainHooks hooks;
    hooks.on_log = [&](const nlohmann::json& j) {
      per_token.push_back(j.at("total").get<double>() / j.at("tokens").get<double>());
    };
    train(init, d, cfg, hooks);
    ASSERT_EQ(per_token.size(), 200u);
    EXPECT_LT(per_token.back(), per_token.front()) << "seed " << seed;
  }
}
