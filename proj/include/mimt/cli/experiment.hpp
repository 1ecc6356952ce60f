// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mimt/analysis.hpp"
#include "mimt/data.hpp"
#include "mimt/model.hpp"
#include "mimt/training.hpp"

namespace mimt::cli {

namespace fs = std::filesystem;

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) { write_text_file(path, j.dump(2) + "\n"); }

// Where a corpus comes from: a synthetic spec drawn with `corpus_seed`, or
// three TSV files.
struct DataConfig {
  std::optional<data::SyntheticSpec> synthetic;
  std::uint64_t corpus_seed = 1;
  std::string train, dev, test;
  bool filter_length_ratio = false;
  std::size_t max_sentence_tokens = data::kMaxSentenceTokens;
  std::size_t vocab_size = 8000;
};

inline void to_json(nlohmann::json& j, const DataConfig& c) {
  j = {{"corpus_seed", c.corpus_seed}, {"vocab_size", c.vocab_size}};
  if (c.synthetic) {
    j["synthetic"] = *c.synthetic;
  } else {
    j["train"] = c.train;
    j["dev"] = c.dev;
    j["test"] = c.test;
    j["filter_length_ratio"] = c.filter_length_ratio;
    j["max_sentence_tokens"] = c.max_sentence_tokens;
  }
}

// Paths are taken relative to `base`.
inline DataConfig data_config_from_json(const nlohmann::json& j, const fs::path& base) {
  DataConfig c;
  c.corpus_seed = j.value("corpus_seed", c.corpus_seed);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  const bool tsv = j.contains("train") || j.contains("dev") || j.contains("test");
  if (j.contains("synthetic") && tsv) throw ConfigError("data: give either 'synthetic' or train/dev/test paths, not both");
  if (tsv) {
    for (const char* key : {"train", "dev", "test"})
      if (!j.contains(key)) throw ConfigError(std::string("data: missing '") + key + "' path");
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).lexically_normal().string(); };
    c.train = resolve(j.at("train").get<std::string>());
    c.dev = resolve(j.at("dev").get<std::string>());
    c.test = resolve(j.at("test").get<std::string>());
    c.filter_length_ratio = j.value("filter_length_ratio", c.filter_length_ratio);
    c.max_sentence_tokens = j.value("max_sentence_tokens", c.max_sentence_tokens);
  } else {
    c.synthetic = j.value("synthetic", data::SyntheticSpec{});
    c.synthetic->validate();
  }
  return c;
}

inline data::Corpus load_experiment_corpus(const DataConfig& c) {
  if (c.synthetic) return data::generate_synthetic(*c.synthetic, numerics::Rng(c.corpus_seed));
  data::LoadOptions opt;
  opt.filter_length_ratio = c.filter_length_ratio;
  opt.max_tokens = c.max_sentence_tokens;
  return data::load_corpus(c.train, c.dev, c.test, opt);
}

inline nlohmann::json corpus_manifest(const DataConfig& c, const data::Corpus& corpus) {
  if (c.synthetic) return data::synthetic_manifest(*c.synthetic, corpus, c.corpus_seed);
  auto stats = [&](const data::TextSplit& s) {
    return nlohmann::json{{"examples", s.size()}, {"hash", data::split_hash(s, corpus.domains)}};
  };
  return {{"domains", corpus.domains.names()},
          {"files", {{"train", c.train}, {"dev", c.dev}, {"test", c.test}}},
          {"splits", {{"train", stats(corpus.train)}, {"dev", stats(corpus.dev)}, {"test", stats(corpus.test)}}}};
}

struct ExperimentConfig {
  DataConfig data;
  nlohmann::json model = {{"preset", "desk"}};  // preset name plus overrides
  training::TrainConfig train;
  model::DecodeConfig decode;
  std::string output_dir;
  std::vector<std::uint64_t> seeds{1};
  std::size_t jobs = 1;
};

// Results of an ablated objective get their own label.
inline std::string experiment_label(const training::TrainConfig& t) {
  if (t.mode == training::Mode::Ours && t.objective.lambda2 == 0.0) return "ours-no-mi";
  return training::to_string(t.mode);
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j, const fs::path& base = ".") {
  static const std::set<std::string> known{"data", "model", "train", "decode", "output_dir", "seeds", "jobs"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown experiment key '" + key + "'");
  ExperimentConfig c;
  try {
    c.data = data_config_from_json(j.value("data", nlohmann::json::object()), base);
    if (j.contains("model")) c.model = j.at("model");
    if (j.contains("train")) c.train = j.at("train").get<training::TrainConfig>();
    if (j.contains("decode")) c.decode = j.at("decode").get<model::DecodeConfig>();
    c.seeds = j.value("seeds", c.seeds);
    c.jobs = j.value("jobs", c.jobs);
    c.output_dir = j.value("output_dir", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (!c.output_dir.empty() && fs::path(c.output_dir).is_relative())
    c.output_dir = (base / c.output_dir).lexically_normal().string();
  if (c.output_dir.empty()) c.output_dir = (fs::path("runs") / experiment_label(c.train)).string();
  if (c.seeds.empty()) throw ConfigError("seed list is empty");
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  c.train.validate();
  return c;
}

inline ExperimentConfig load_experiment(const fs::path& path) {
  return experiment_from_json(read_json_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

// Everything a seed run needs, with sizes filled in from the corpus.
struct ResolvedExperiment {
  ExperimentConfig config;
  data::Corpus corpus;
  training::TrainData train_data;
  std::vector<data::ParallelExample> test;
  model::ModelConfig model;
  bool domain_tags = false;
};

inline ResolvedExperiment resolve_experiment(const ExperimentConfig& c) {
  ResolvedExperiment r;
  r.config = c;
  r.corpus = load_experiment_corpus(c.data);
  r.domain_tags = c.train.mode == training::Mode::DomainTag;
  auto& td = r.train_data;
  td.vocab = data::Vocab::build({&r.corpus.train}, c.data.vocab_size, r.domain_tags ? &r.corpus.domains : nullptr);
  td.train = data::encode_split(td.vocab, r.corpus.train, r.domain_tags);
  td.dev = data::encode_split(td.vocab, r.corpus.dev, r.domain_tags);
  r.test = data::encode_split(td.vocab, r.corpus.test, r.domain_tags);
  nlohmann::json m = c.model;
  try {
    r.model = m.get<model::ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  r.model.vocab_size = td.vocab.size();
  r.model.n_domains = r.corpus.domains.size();
  r.model.validate();
  if (c.decode.max_length > r.model.max_positions) r.config.decode.max_length = r.model.max_positions;
  r.config.decode.validate(r.model.max_positions);
  return r;
}

// The echo written to config.json; loading it reproduces the experiment.
inline nlohmann::json resolved_json(const ResolvedExperiment& r) {
  nlohmann::json model = r.model;
  model.erase("vocab_size");
  model.erase("n_domains");
  return {{"data", r.config.data},    {"model", model},         {"train", r.config.train},
          {"decode", r.config.decode}, {"output_dir", r.config.output_dir}, {"seeds", r.config.seeds},
          {"jobs", r.config.jobs}};
}

// A trained model with what decoding needs: vocabulary, domain names, mode.
struct ModelBundle {
  model::ModelParams params;
  data::Vocab vocab;
  data::DomainSet domains;
  training::Mode mode = training::Mode::Ours;
  bool domain_tags = false;
};

inline void save_model(const fs::path& path, const model::ModelParams& p, const data::Vocab& vocab,
                       const data::DomainSet& domains, training::Mode mode, bool domain_tags,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  model::CheckpointFile ckpt;
  ckpt.meta = {{"kind", "model"},
               {"model", p.config},
               {"vocab", vocab.to_json()},
               {"domains", domains.names()},
               {"mode", training::to_string(mode)},
               {"domain_tags", domain_tags},
               {"extra", extra}};
  model::store_params(ckpt, p);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  model::write_checkpoint(path.string(), ckpt);
}

inline ModelBundle load_model(const fs::path& path) {
  const auto ckpt = model::read_checkpoint(path.string());
  if (ckpt.meta.value("kind", std::string()) != "model")
    throw DataError("'" + path.string() + "' is not a model checkpoint");
  ModelBundle b{model::load_params(ckpt, ckpt.meta.at("model").get<model::ModelConfig>()),
                data::Vocab::from_json(ckpt.meta.at("vocab")),
                data::DomainSet(ckpt.meta.at("domains").get<std::vector<std::string>>()),
                training::parse_mode(ckpt.meta.at("mode").get<std::string>()),
                ckpt.meta.at("domain_tags").get<bool>()};
  b.domains.lock();
  return b;
}

inline std::vector<data::ParallelExample> encode_for(const ModelBundle& b, const data::TextSplit& split) {
  return data::encode_split(b.vocab, split, b.domain_tags);
}

// Reads a TSV split against the model's domain registry.
inline data::TextSplit load_split_for(const ModelBundle& b, const std::string& path) {
  data::DomainSet domains = b.domains;
  return data::load_tsv(path, domains).examples;
}

// Beam or greedy decoding of each example with its domain's selector.
inline std::vector<analysis::Sentence> translate_examples(const ModelBundle& b,
                                                          const std::vector<data::ParallelExample>& examples,
                                                          const model::DecodeConfig& decode) {
  std::vector<analysis::Sentence> out(examples.size());
  if (decode.beam == 1) {
    std::map<std::size_t, std::vector<std::size_t>> by_domain;
    for (std::size_t i = 0; i < examples.size(); ++i) by_domain[examples[i].domain.index].push_back(i);
    for (const auto& [domain, ids] : by_domain)
      for (std::size_t start = 0; start < ids.size(); start += training::kDevChunk) {
        std::vector<const std::vector<int>*> sources;
        const std::size_t end = std::min(ids.size(), start + training::kDevChunk);
        for (std::size_t k = start; k < end; ++k) sources.push_back(&examples[ids[k]].source);
        const auto hyps = model::greedy_decode_batch(b.params, sources, training::selector_for(b.mode, domain),
                                                     decode.max_length);
        for (std::size_t k = start; k < end; ++k) out[ids[k]] = b.vocab.decode(hyps[k - start]);
      }
    return out;
  }
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto h = model::beam_decode(b.params, examples[i].source,
                                      training::selector_for(b.mode, examples[i].domain.index), decode);
    out[i] = b.vocab.decode(h.tokens);
  }
  return out;
}

struct DomainMetrics {
  std::vector<std::string> domains;
  std::vector<double> bleu;
  std::vector<double> chrf;
  double bleu_average = 0.0;  // unweighted over domains
  double chrf_average = 0.0;
};

inline void to_json(nlohmann::json& j, const DomainMetrics& m) {
  j = {{"domains", m.domains},           {"bleu", m.bleu},
       {"chrf", m.chrf},                 {"bleu_average", m.bleu_average},
       {"chrf_average", m.chrf_average}};
}
inline void from_json(const nlohmann::json& j, DomainMetrics& m) {
  m.domains = j.at("domains").get<std::vector<std::string>>();
  m.bleu = j.at("bleu").get<std::vector<double>>();
  m.chrf = j.at("chrf").get<std::vector<double>>();
  m.bleu_average = j.at("bleu_average").get<double>();
  m.chrf_average = j.at("chrf_average").get<double>();
}

inline DomainMetrics score_by_domain(const data::TextSplit& refs, const std::vector<analysis::Sentence>& hyps,
                                     const data::DomainSet& domains) {
  if (refs.size() != hyps.size())
    throw DataError(std::to_string(hyps.size()) + " hypotheses for " + std::to_string(refs.size()) + " references");
  std::map<std::size_t, std::pair<std::vector<analysis::Sentence>, std::vector<analysis::Sentence>>> groups;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    groups[refs[i].domain.index].first.push_back(hyps[i]);
    groups[refs[i].domain.index].second.push_back(refs[i].target);
  }
  DomainMetrics m;
  for (const auto& [d, g] : groups) {
    m.domains.push_back(domains.name(data::DomainId{d}));
    m.bleu.push_back(analysis::corpus_bleu(g.first, g.second).score);
    m.chrf.push_back(analysis::chrf(g.first, g.second).score);
    m.bleu_average += m.bleu.back();
    m.chrf_average += m.chrf.back();
  }
  if (!groups.empty()) {
    m.bleu_average /= static_cast<double>(groups.size());
    m.chrf_average /= static_cast<double>(groups.size());
  }
  return m;
}

inline void write_hypotheses(const fs::path& path, const std::vector<analysis::Sentence>& hyps) {
  std::ostringstream out;
  for (const auto& h : hyps) out << data::join_tokens(h) << '\n';
  write_text_file(path, out.str());
}

inline std::vector<analysis::Sentence> read_hypotheses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open hypotheses '" + path.string() + "'");
  std::vector<analysis::Sentence> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(data::split_whitespace(line));
  return out;
}

inline fs::path seed_dir(const fs::path& out, std::uint64_t seed) { return out / ("seed-" + std::to_string(seed)); }

struct SeedOptions {
  bool resume = false;
  std::size_t stop_after = 0;  // interrupt after this many steps (0 = run to the end)
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::string status;  // training status, or "failed"
  std::string error;
  int exit_code = 0;
  std::optional<DomainMetrics> test;
  nlohmann::json history;
  nlohmann::json cost;
};

inline void to_json(nlohmann::json& j, const SeedResult& r) {
  j = {{"seed", r.seed}, {"status", r.status}, {"history", r.history}, {"cost", r.cost}};
  if (!r.error.empty()) {
    j["error"] = r.error;
    j["exit_code"] = r.exit_code;
  }
  j["test"] = r.test ? nlohmann::json(*r.test) : nlohmann::json(nullptr);
}
inline void from_json(const nlohmann::json& j, SeedResult& r) {
  r.seed = j.at("seed").get<std::uint64_t>();
  r.status = j.at("status").get<std::string>();
  r.error = j.value("error", std::string());
  r.exit_code = j.value("exit_code", 0);
  r.history = j.value("history", nlohmann::json());
  r.cost = j.value("cost", nlohmann::json());
  if (j.contains("test") && !j.at("test").is_null()) r.test = j.at("test").get<DomainMetrics>();
}

namespace detail {

// Drops log entries past `step`, so a resumed run appends exactly what the
// uninterrupted run would have written.
inline void truncate_log(const fs::path& path, std::size_t step) {
  std::ifstream in(path);
  if (!in) return;
  std::string kept, line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (nlohmann::json::parse(line).value("step", std::size_t{0}) <= step) kept += line + "\n";
  }
  in.close();
  write_text_file(path, kept);
}

}  // namespace detail

// Trains one seed into `dir`: log.jsonl, checkpoints/{state,best}.ckpt,
// test.hyp and result.json.
inline SeedResult run_seed(const ResolvedExperiment& r, std::uint64_t seed, const fs::path& dir,
                           const SeedOptions& options = {}) {
  SeedResult res;
  res.seed = seed;
  const fs::path ckpt_dir = dir / "checkpoints";
  const fs::path state_path = ckpt_dir / "state.ckpt", best_path = ckpt_dir / "best.ckpt";
  const fs::path log_path = dir / "log.jsonl";
  fs::create_directories(ckpt_dir);

  training::TrainConfig tc = r.config.train;
  tc.seed = seed;
  const auto init = model::init_model(r.model, numerics::Rng(seed).split(training::kInitStream));
  std::ofstream* log = nullptr;
  training::TrainHooks hooks;
  std::unique_ptr<training::Trainer> trainer;
  hooks.on_log = [&](const nlohmann::json& j) {
    nlohmann::json line = j;
    line["event"] = "train";
    *log << line.dump() << '\n';
  };
  hooks.on_eval = [&](const training::EvalRecord& rec, bool improved) {
    nlohmann::json line = rec;
    line["event"] = "eval";
    line["improved"] = improved;
    *log << line.dump() << '\n';
    log->flush();
    if (improved)
      save_model(best_path, trainer->params(), r.train_data.vocab, r.corpus.domains, tc.mode, r.domain_tags,
                 {{"seed", seed}, {"step", rec.step}});
  };
  trainer = std::make_unique<training::Trainer>(init, r.train_data, tc, hooks);
  if (options.resume && fs::exists(state_path)) {
    trainer->load_state(state_path.string());
    detail::truncate_log(log_path, trainer->step_count());
  } else {
    fs::remove(state_path);
    fs::remove(best_path);
    write_text_file(log_path, "");
  }
  std::ofstream log_stream(log_path, std::ios::app);
  log = &log_stream;

  // Training state is saved after every evaluation so a run can resume.
  while (!trainer->done() && (options.stop_after == 0 || trainer->step_count() < options.stop_after)) {
    const auto evals = trainer->history().records.size();
    trainer->step();
    if (trainer->history().records.size() != evals) trainer->save_state(state_path.string());
  }
  trainer->save_state(state_path.string());
  log_stream.flush();

  const auto& h = trainer->history();
  res.status = h.status;
  res.history = h;
  res.cost = training::cost_counters(h);
  if (h.status == "running") return res;
  if (h.status == "diverged") {
    res.error = h.diagnostic;
    res.exit_code = NumericError("").exit_code();
  } else {
    if (!fs::exists(best_path))
      save_model(best_path, trainer->best_params(), r.train_data.vocab, r.corpus.domains, tc.mode, r.domain_tags,
                 {{"seed", seed}, {"step", h.best_step}});
    const auto bundle = load_model(best_path);
    const auto hyps = translate_examples(bundle, r.test, r.config.decode);
    write_hypotheses(dir / "test.hyp", hyps);
    if (!r.corpus.test.empty()) res.test = score_by_domain(r.corpus.test, hyps, r.corpus.domains);
  }
  write_json_file(dir / "result.json", res);
  return res;
}

struct Summary {
  std::string label;
  std::vector<std::string> domains;
  std::vector<SeedResult> seeds;
  std::vector<double> bleu_mean, bleu_std;  // per domain, over successful seeds
  double average_mean = 0.0, average_std = 0.0;
  double chrf_mean = 0.0, chrf_std = 0.0;
  std::size_t succeeded = 0;
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

// Mean and sample standard deviation over the seeds that produced test scores.
inline Summary summarize(const std::string& label, const std::vector<SeedResult>& seeds) {
  Summary s;
  s.label = label;
  s.seeds = seeds;
  std::vector<std::vector<double>> per_domain;
  std::vector<double> avg, chrf;
  for (const auto& r : seeds) {
    if (!r.test) continue;
    if (s.domains.empty()) {
      s.domains = r.test->domains;
      per_domain.resize(s.domains.size());
    }
    if (r.test->domains != s.domains) throw DataError("seed runs disagree on test domains");
    for (std::size_t d = 0; d < s.domains.size(); ++d) per_domain[d].push_back(r.test->bleu[d]);
    avg.push_back(r.test->bleu_average);
    chrf.push_back(r.test->chrf_average);
    ++s.succeeded;
  }
  for (const auto& v : per_domain) {
    const auto [m, sd] = mean_std(v);
    s.bleu_mean.push_back(m);
    s.bleu_std.push_back(sd);
  }
  std::tie(s.average_mean, s.average_std) = mean_std(avg);
  std::tie(s.chrf_mean, s.chrf_std) = mean_std(chrf);
  return s;
}

inline void to_json(nlohmann::json& j, const Summary& s) {
  j = {{"label", s.label},          {"domains", s.domains},           {"seeds", s.seeds},
       {"bleu_mean", s.bleu_mean},  {"bleu_std", s.bleu_std},         {"average_mean", s.average_mean},
       {"average_std", s.average_std}, {"chrf_mean", s.chrf_mean},    {"chrf_std", s.chrf_std},
       {"succeeded", s.succeeded}};
}
inline void from_json(const nlohmann::json& j, Summary& s) {
  s.label = j.at("label").get<std::string>();
  s.domains = j.at("domains").get<std::vector<std::string>>();
  s.seeds = j.at("seeds").get<std::vector<SeedResult>>();
  s.bleu_mean = j.at("bleu_mean").get<std::vector<double>>();
  s.bleu_std = j.at("bleu_std").get<std::vector<double>>();
  s.average_mean = j.at("average_mean").get<double>();
  s.average_std = j.at("average_std").get<double>();
  s.chrf_mean = j.at("chrf_mean").get<double>();
  s.chrf_std = j.at("chrf_std").get<double>();
  s.succeeded = j.at("succeeded").get<std::size_t>();
}

inline std::string pm(double mean, double sd) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << mean << " ± " << sd;
  return os.str();
}

// One row per seed, then a mean ± std row.
inline std::string summary_tsv(const Summary& s) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(2);
  out << "seed\tstatus";
  for (const auto& d : s.domains) out << '\t' << d;
  out << "\taverage\tchrf\n";
  for (const auto& r : s.seeds) {
    out << r.seed << '\t' << r.status;
    if (r.test) {
      for (double b : r.test->bleu) out << '\t' << b;
      out << '\t' << r.test->bleu_average << '\t' << r.test->chrf_average;
    } else {
      for (std::size_t d = 0; d < s.domains.size() + 2; ++d) out << "\t-";
    }
    out << '\n';
  }
  out << s.label << "\tmean ± std";
  for (std::size_t d = 0; d < s.domains.size(); ++d) out << '\t' << pm(s.bleu_mean[d], s.bleu_std[d]);
  out << '\t' << pm(s.average_mean, s.average_std) << '\t' << pm(s.chrf_mean, s.chrf_std) << '\n';
  return out.str();
}

}  // namespace mimt::cli
