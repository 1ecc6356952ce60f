// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <iostream>
#include <thread>

#include "mimt/cli/experiment.hpp"

namespace mimt::cli {

// ---- gen-data ---------------------------------------------------------------

struct GenDataOptions {
  std::string spec_path;  // empty: default spec
  std::string out_dir;
  std::uint64_t seed = 1;
  std::size_t ladder_per_domain = 0;  // also write an ambiguity-ladder test set
  std::size_t ladder_length = 6;
};

inline int cmd_gen_data(const GenDataOptions& o) {
  data::SyntheticSpec spec;
  if (!o.spec_path.empty()) {
    try {
      spec = read_json_file(o.spec_path).get<data::SyntheticSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("synthetic spec: " + std::string(e.what()));
    }
  }
  spec.validate();
  const auto corpus = data::generate_synthetic(spec, numerics::Rng(o.seed));
  const fs::path out(o.out_dir);
  fs::create_directories(out);
  data::write_tsv((out / "train.tsv").string(), corpus.train, corpus.domains);
  data::write_tsv((out / "dev.tsv").string(), corpus.dev, corpus.domains);
  data::write_tsv((out / "test.tsv").string(), corpus.test, corpus.domains);
  auto manifest = data::synthetic_manifest(spec, corpus, o.seed);
  if (o.ladder_per_domain > 0) {
    const auto ladder = data::generate_ambiguity_ladder(spec, o.ladder_per_domain, o.ladder_length,
                                                        numerics::Rng(o.seed).split(1000));
    data::write_tsv((out / "ladder.tsv").string(), ladder, corpus.domains);
    manifest["ladder"] = {{"per_domain", o.ladder_per_domain}, {"length", o.ladder_length},
                          {"hash", data::split_hash(ladder, corpus.domains)}};
  }
  write_json_file(out / "manifest.json", manifest);
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;  // replaces the seed list
  std::string out_dir;                // replaces output_dir
  std::optional<std::size_t> jobs;
  SeedOptions seed_options;
};

// Runs every seed; a failing seed is recorded and the others proceed. The
// exit code is that of the first failure.
inline int run_experiment(ExperimentConfig cfg, const SeedOptions& seed_options, std::ostream& log = std::cerr) {
  const auto r = resolve_experiment(cfg);
  const fs::path out(r.config.output_dir);
  fs::create_directories(out);
  write_json_file(out / "config.json", resolved_json(r));
  write_json_file(out / "corpus-manifest.json", corpus_manifest(r.config.data, r.corpus));
  const auto label = experiment_label(r.config.train);

  std::vector<SeedResult> results(r.config.seeds.size());
  auto run_one = [&](std::size_t i) {
    const auto seed = r.config.seeds[i];
    auto fail = [&](const std::string& what, int code) {
      results[i].seed = seed;
      results[i].status = "failed";
      results[i].error = what;
      results[i].exit_code = code;
      try {
        write_json_file(seed_dir(out, seed) / "result.json", results[i]);
      } catch (const std::exception&) {
        // the seed directory itself is unusable; the summary still records the failure
      }
    };
    try {
      results[i] = run_seed(r, seed, seed_dir(out, seed), seed_options);
    } catch (const Error& e) {
      fail(e.what(), e.exit_code());
    } catch (const fs::filesystem_error& e) {
      fail(e.what(), DataError("").exit_code());
    }
  };
  const std::size_t jobs = std::min(r.config.jobs, results.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < results.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < results.size(); i = next++) run_one(i);
      });
    for (auto& t : pool) t.join();
  }

  int code = 0;
  for (const auto& res : results) {
    log << label << " seed " << res.seed << ": " << res.status;
    if (res.test) log << ", test BLEU " << res.test->bleu_average;
    if (!res.error.empty()) log << " (" << res.error << ")";
    log << '\n';
    if (code == 0 && res.exit_code != 0) code = res.exit_code;
  }
  if (std::any_of(results.begin(), results.end(), [](const SeedResult& s) { return s.status == "running"; }))
    return code;  // interrupted on purpose; no summary yet
  const auto summary = summarize(label, results);
  write_json_file(out / "summary.json", summary);
  write_text_file(out / "summary.tsv", summary_tsv(summary));
  log << label << " average BLEU " << pm(summary.average_mean, summary.average_std) << " over " << summary.succeeded
      << " seed(s)\n";
  return code;
}

inline int cmd_train(const TrainOptions& o) {
  auto cfg = load_experiment(o.config_path);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  if (o.jobs) cfg.jobs = *o.jobs;
  return run_experiment(cfg, o.seed_options);
}

// ---- translate --------------------------------------------------------------

struct TranslateOptions {
  std::string checkpoint;
  std::string input = "-";
  std::string output = "-";
  std::string domain;  // required for plain (non-TSV) input
  model::DecodeConfig decode;
  std::string xmi_sidecar;
  std::string mixed_checkpoint;  // p_G source for the sidecar
};

// Scores `targets` (EOS appended) under the model's domain adapters and the
// general path (general adapter, or the Mixed model when given).
inline std::vector<analysis::TokenScore> score_outputs(const ModelBundle& b, const ModelBundle* mixed,
                                                       const std::vector<data::ParallelExample>& inputs,
                                                       const std::vector<analysis::Sentence>& targets) {
  if (!training::uses_domain_adapters(b.mode) && !mixed)
    throw ConfigError("XMI needs a model with domain adapters, or a Mixed model as the general source");
  std::vector<data::ParallelExample> examples = inputs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    examples[i].index = i;
    examples[i].target = b.vocab.encode(targets[i]);
    examples[i].target.push_back(data::Vocab::kEos);
  }
  analysis::SelectorFn da = [&b](std::size_t d) { return training::selector_for(b.mode, d); };
  if (!mixed) return analysis::score_tokens(b.params, da, nullptr, examples);
  if (!(mixed->vocab == b.vocab)) throw ConfigError("the Mixed model uses a different vocabulary");
  if (mixed->domain_tags) throw ConfigError("the general-source model must not use domain tags");
  return analysis::score_tokens(b.params, da, &mixed->params, examples);
}

inline int cmd_translate(const TranslateOptions& o, std::istream& default_in = std::cin,
                         std::ostream& default_out = std::cout) {
  const auto b = load_model(o.checkpoint);
  std::optional<ModelBundle> mixed;
  if (!o.mixed_checkpoint.empty()) mixed = load_model(o.mixed_checkpoint);
  auto decode = o.decode;
  decode.max_length = std::min(decode.max_length, b.params.config.max_positions);
  decode.validate(b.params.config.max_positions);
  std::optional<data::DomainId> fixed;
  if (!o.domain.empty()) fixed = b.domains.at(o.domain);

  std::ifstream file;
  if (o.input != "-") {
    file.open(o.input);
    if (!file) throw DataError("cannot open input '" + o.input + "'");
  }
  std::istream& in = o.input == "-" ? default_in : file;
  // Blank lines produce blank output lines and are not decoded.
  data::TextSplit split;
  std::vector<std::size_t> line_of;
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const std::size_t line_no = ++lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    data::TextExample ex;
    const auto tab = line.find('\t');
    if (tab != std::string::npos) {
      const auto rest = line.substr(tab + 1);
      ex.source = data::split_whitespace(rest.substr(0, rest.find('\t')));
      ex.domain = fixed ? *fixed : b.domains.at(line.substr(0, tab));
    } else {
      ex.source = data::split_whitespace(line);
      if (ex.source.empty()) continue;
      if (!fixed)
        throw ConfigError("input line " + std::to_string(line_no) + " has no domain column; pass --domain (known: " +
                          b.domains.joined() + ")");
      ex.domain = *fixed;
    }
    if (ex.source.empty()) continue;
    split.push_back(std::move(ex));
    line_of.push_back(line_no - 1);
  }

  const auto examples = encode_for(b, split);
  const auto hyps = translate_examples(b, examples, decode);
  std::vector<std::string> output(lines);
  for (std::size_t i = 0; i < hyps.size(); ++i) output[line_of[i]] = data::join_tokens(hyps[i]);
  std::ostringstream text;
  for (const auto& l : output) text << l << '\n';
  if (o.output == "-")
    default_out << text.str();
  else
    write_text_file(o.output, text.str());

  if (!o.xmi_sidecar.empty()) {
    auto scores = score_outputs(b, mixed ? &*mixed : nullptr, examples, hyps);
    for (auto& sc : scores) sc.sentence = line_of[sc.sentence];
    std::ostringstream tsv;
    analysis::write_token_dump(tsv, scores, b.vocab);
    write_text_file(o.xmi_sidecar, tsv.str());
  }
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateOptions {
  std::string checkpoint;
  std::string test;
  std::string hypotheses;  // score these instead of decoding
  std::string out_dir;
  model::DecodeConfig decode;
};

inline int cmd_evaluate(const EvaluateOptions& o, std::ostream& log = std::cerr) {
  const auto b = load_model(o.checkpoint);
  const auto split = load_split_for(b, o.test);
  if (split.empty()) throw DataError("test file '" + o.test + "' has no examples");
  std::vector<analysis::Sentence> hyps;
  if (!o.hypotheses.empty()) {
    hyps = read_hypotheses(o.hypotheses);
  } else {
    auto decode = o.decode;
    decode.max_length = std::min(decode.max_length, b.params.config.max_positions);
    hyps = translate_examples(b, encode_for(b, split), decode);
  }
  const auto m = score_by_domain(split, hyps, b.domains);
  const fs::path out(o.out_dir);
  if (o.hypotheses.empty()) write_hypotheses(out / "test.hyp", hyps);
  write_json_file(out / "metrics.json", m);
  std::ostringstream tsv;
  tsv << "domain\tbleu\tchrf\n";
  for (std::size_t d = 0; d < m.domains.size(); ++d) tsv << m.domains[d] << '\t' << m.bleu[d] << '\t' << m.chrf[d] << '\n';
  tsv << "average\t" << m.bleu_average << '\t' << m.chrf_average << '\n';
  write_text_file(out / "metrics.tsv", tsv.str());
  log << "BLEU " << m.bleu_average << ", chrF " << m.chrf_average << '\n';
  return 0;
}

// ---- xmi-hist ---------------------------------------------------------------

struct XmiHistOptions {
  std::string checkpoint;
  std::string test;
  std::string mixed_checkpoint;
  std::string variant = "difference";
  std::size_t bins = 80;
  std::string out_dir;
};

inline analysis::XmiHistogram gold_xmi_histogram(const ModelBundle& b, const ModelBundle* mixed,
                                                 const data::TextSplit& split, analysis::XmiVariant variant,
                                                 std::size_t bins, std::vector<analysis::TokenScore>* scores_out = nullptr) {
  std::vector<analysis::Sentence> gold;
  for (const auto& ex : split) gold.push_back(ex.target);
  auto scores = score_outputs(b, mixed, encode_for(b, split), gold);
  auto h = analysis::xmi_histogram(analysis::xmi_values(scores, variant), variant,
                                   mixed ? analysis::GeneralSource::MixedCheckpoint
                                         : analysis::GeneralSource::GeneralAdapter,
                                   bins);
  if (scores_out) *scores_out = std::move(scores);
  return h;
}

inline int cmd_xmi_hist(const XmiHistOptions& o) {
  const auto b = load_model(o.checkpoint);
  std::optional<ModelBundle> mixed;
  if (!o.mixed_checkpoint.empty()) mixed = load_model(o.mixed_checkpoint);
  const auto split = load_split_for(b, o.test);
  if (split.empty()) throw DataError("test file '" + o.test + "' has no examples");
  const auto variant = analysis::parse_variant(o.variant);
  std::vector<analysis::TokenScore> scores;
  const auto h = gold_xmi_histogram(b, mixed ? &*mixed : nullptr, split, variant, o.bins, &scores);
  const fs::path out(o.out_dir);
  write_json_file(out / "xmi-hist.json", h);
  std::ostringstream tsv, dump;
  analysis::write_histogram_tsv(tsv, h);
  write_text_file(out / "xmi-hist.tsv", tsv.str());
  write_text_file(out / "xmi-hist.svg", analysis::histogram_svg({{training::to_string(b.mode), &h}}, "Token XMI"));
  analysis::write_token_dump(dump, scores, b.vocab, variant);
  write_text_file(out / "xmi-tokens.tsv", dump.str());
  return 0;
}

// ---- quartiles --------------------------------------------------------------

struct QuartileOptions {
  std::string train;
  std::string test;
  std::string hyp_a;
  std::string hyp_b;
  double top_fraction = 0.01;
  std::string stoplist;
  bool raw_tf = false;
  std::string out_dir;
};

inline std::string quartile_tsv(const analysis::QuartileReport& r, const data::DomainSet& domains) {
  std::ostringstream out;
  out << "domain\tquartile\tsentences\tmean_keywords\tbleu_a\tbleu_b\tdelta\n";
  auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("-"); };
  for (const auto& d : r.domains) {
    for (std::size_t q = 0; q < 4; ++q) {
      const auto& b = d.bins[q];
      out << domains.name(data::DomainId{d.domain}) << "\tQ" << q + 1 << '\t' << b.sentences.size() << '\t'
          << b.mean_keywords << '\t' << opt(b.bleu_a) << '\t' << opt(b.bleu_b) << '\t' << opt(b.delta) << '\n';
    }
    out << domains.name(data::DomainId{d.domain}) << "\tall\t-\t-\t" << d.bleu_a << '\t' << d.bleu_b << '\t' << d.delta
        << '\n';
  }
  for (std::size_t q = 0; q < 4; ++q) out << "mean\tQ" << q + 1 << "\t-\t-\t-\t-\t" << opt(r.mean_delta[q]) << '\n';
  return out.str();
}

inline int cmd_quartiles(const QuartileOptions& o) {
  data::DomainSet domains;
  const auto train = data::load_tsv(o.train, domains).examples;
  domains.lock();
  const auto test = data::load_tsv(o.test, domains).examples;
  analysis::KeywordOptions ko;
  ko.top_fraction = o.top_fraction;
  ko.raw_tf = o.raw_tf;
  if (!o.stoplist.empty()) {
    std::ifstream in(o.stoplist);
    if (!in) throw DataError("cannot open stoplist '" + o.stoplist + "'");
    ko.stoplist = analysis::load_stoplist(in);
  }
  const auto keywords = analysis::extract_tfidf_keywords(train, domains.size(), ko);
  const auto report = analysis::quartile_report(test, keywords, read_hypotheses(o.hyp_a), read_hypotheses(o.hyp_b));
  const fs::path out(o.out_dir);
  write_json_file(out / "quartiles.json", report);
  write_text_file(out / "quartiles.tsv", quartile_tsv(report, domains));
  nlohmann::json kw = keywords;
  write_json_file(out / "keywords.json", {{"domains", domains.names()}, {"keywords", kw}});
  return 0;
}

// ---- heatmap ----------------------------------------------------------------

struct HeatmapOptions {
  std::string checkpoint;
  std::string test;
  std::string mixed_checkpoint;
  std::string hypotheses;  // color these instead of the references
  std::size_t limit = 20;
  std::string out;  // HTML path; empty prints ANSI to stdout
};

inline std::vector<analysis::HeatmapRow> heatmap_rows(const ModelBundle& b, const ModelBundle* mixed,
                                                      const data::TextSplit& split,
                                                      const std::vector<analysis::Sentence>& targets) {
  const auto scores = score_outputs(b, mixed, encode_for(b, split), targets);
  std::vector<analysis::HeatmapRow> rows(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    rows[i].label = "#" + std::to_string(i) + " [" + b.domains.name(split[i].domain) + "]";
    rows[i].source = split[i].source;
  }
  // Token dumps include EOS; it is shown as </s>.
  for (const auto& s : scores) {
    auto& row = rows[s.sentence];
    row.tokens.push_back(s.token == data::Vocab::kEos ? "</s>" : b.vocab.token(s.token));
    row.xmi.push_back(s.xmi(analysis::XmiVariant::Difference));
  }
  return rows;
}

inline int cmd_heatmap(const HeatmapOptions& o, std::ostream& out = std::cout) {
  const auto b = load_model(o.checkpoint);
  std::optional<ModelBundle> mixed;
  if (!o.mixed_checkpoint.empty()) mixed = load_model(o.mixed_checkpoint);
  auto split = load_split_for(b, o.test);
  std::vector<analysis::Sentence> targets;
  if (!o.hypotheses.empty()) {
    targets = read_hypotheses(o.hypotheses);
    if (targets.size() != split.size())
      throw DataError(std::to_string(targets.size()) + " hypotheses for " + std::to_string(split.size()) + " test sentences");
  } else {
    for (const auto& ex : split) targets.push_back(ex.target);
  }
  if (o.limit > 0 && split.size() > o.limit) {
    split.resize(o.limit);
    targets.resize(o.limit);
  }
  const auto rows = heatmap_rows(b, mixed ? &*mixed : nullptr, split, targets);
  if (o.out.empty())
    out << analysis::heatmap_ansi(rows);
  else
    write_text_file(o.out, analysis::heatmap_html(rows));
  return 0;
}

// ---- report -----------------------------------------------------------------

struct ReportOptions {
  std::vector<std::string> runs;
  std::string out_dir;
  double top_fraction = 0.01;
  std::size_t heatmap_limit = 20;
};

struct RunInfo {
  fs::path dir;
  ExperimentConfig config;
  Summary summary;
  std::string test_hash;
};

inline RunInfo read_run(const fs::path& dir) {
  RunInfo r;
  r.dir = dir;
  if (!fs::exists(dir / "summary.json")) throw DataError("'" + dir.string() + "' has no summary.json");
  r.config = experiment_from_json(read_json_file(dir / "config.json"), dir);
  r.summary = read_json_file(dir / "summary.json").get<Summary>();
  r.test_hash = read_json_file(dir / "corpus-manifest.json").at("splits").at("test").at("hash").get<std::string>();
  return r;
}

// Compares runs over a shared test set: BLEU/chrF table, XMI histograms,
// quartile deltas against the first run, and heatmaps.
inline int cmd_report(const ReportOptions& o, std::ostream& log = std::cerr) {
  if (o.runs.empty()) throw ConfigError("report needs at least one run directory");
  std::vector<RunInfo> runs;
  for (const auto& d : o.runs) runs.push_back(read_run(d));
  for (const auto& r : runs)
    if (r.test_hash != runs.front().test_hash)
      throw DataError("runs '" + runs.front().dir.string() + "' and '" + r.dir.string() + "' use different test sets");
  const fs::path out = fs::path(o.out_dir);
  fs::create_directories(out);

  // BLEU table, one row per run.
  nlohmann::json table = nlohmann::json::array();
  std::ostringstream tsv, html;
  tsv << "run";
  for (const auto& d : runs.front().summary.domains) tsv << '\t' << d;
  tsv << "\taverage\tchrf\tseeds\n";
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Runs</title></head><body>\n<table border=\"1\">\n<tr><th>run</th>";
  for (const auto& d : runs.front().summary.domains) html << "<th>" << d << "</th>";
  html << "<th>average</th><th>chrF</th></tr>\n";
  for (const auto& r : runs) {
    const auto& s = r.summary;
    table.push_back({{"run", r.dir.string()}, {"label", s.label}, {"domains", s.domains}, {"bleu_mean", s.bleu_mean},
                     {"bleu_std", s.bleu_std}, {"average_mean", s.average_mean}, {"average_std", s.average_std},
                     {"chrf_mean", s.chrf_mean}, {"chrf_std", s.chrf_std}, {"seeds", s.succeeded}});
    tsv << s.label;
    html << "<tr><td>" << s.label << "</td>";
    for (std::size_t d = 0; d < s.domains.size(); ++d) {
      tsv << '\t' << pm(s.bleu_mean[d], s.bleu_std[d]);
      html << "<td>" << pm(s.bleu_mean[d], s.bleu_std[d]) << "</td>";
    }
    tsv << '\t' << pm(s.average_mean, s.average_std) << '\t' << pm(s.chrf_mean, s.chrf_std) << '\t' << s.succeeded << '\n';
    html << "<td>" << pm(s.average_mean, s.average_std) << "</td><td>" << pm(s.chrf_mean, s.chrf_std) << "</td></tr>\n";
  }
  html << "</table>\n</body></html>\n";
  write_json_file(out / "bleu.json", table);
  write_text_file(out / "bleu.tsv", tsv.str());
  write_text_file(out / "bleu.html", html.str());

  const auto corpus = load_experiment_corpus(runs.front().config.data);
  auto first_seed = [](const RunInfo& r) -> std::optional<std::uint64_t> {
    for (const auto& s : r.summary.seeds)
      if (s.test) return s.seed;
    return std::nullopt;
  };

  // XMI histograms; a Mixed run among the inputs serves as p_G as well.
  std::optional<ModelBundle> mixed;
  for (const auto& r : runs)
    if (r.config.train.mode == training::Mode::Mixed)
      if (auto s = first_seed(r)) {
        mixed = load_model(seed_dir(r.dir, *s) / "checkpoints" / "best.ckpt");
        break;
      }
  std::vector<std::pair<std::string, analysis::XmiHistogram>> hists;
  for (const auto& r : runs) {
    const auto s = first_seed(r);
    if (!s || !training::uses_domain_adapters(r.config.train.mode)) continue;
    const auto b = load_model(seed_dir(r.dir, *s) / "checkpoints" / "best.ckpt");
    hists.emplace_back(r.summary.label + " (general adapter)",
                       gold_xmi_histogram(b, nullptr, corpus.test, analysis::XmiVariant::Difference, 80));
    if (mixed)
      hists.emplace_back(r.summary.label + " (Mixed)",
                         gold_xmi_histogram(b, &*mixed, corpus.test, analysis::XmiVariant::Difference, 80));
    const auto rows = heatmap_rows(b, nullptr,
                                   data::TextSplit(corpus.test.begin(),
                                                   corpus.test.begin() + static_cast<long>(std::min(o.heatmap_limit, corpus.test.size()))),
                                   [&] {
                                     std::vector<analysis::Sentence> t;
                                     for (std::size_t i = 0; i < std::min(o.heatmap_limit, corpus.test.size()); ++i)
                                       t.push_back(corpus.test[i].target);
                                     return t;
                                   }());
    write_text_file(out / ("heatmap-" + r.summary.label + ".html"), analysis::heatmap_html(rows, r.summary.label));
  }
  if (!hists.empty()) {
    nlohmann::json hj = nlohmann::json::object();
    std::vector<std::pair<std::string, const analysis::XmiHistogram*>> series;
    for (const auto& [name, h] : hists) {
      hj[name] = h;
      series.emplace_back(name, &h);
      std::ostringstream t;
      analysis::write_histogram_tsv(t, h);
      std::string file = name;
      std::replace(file.begin(), file.end(), ' ', '_');
      file.erase(std::remove_if(file.begin(), file.end(), [](char c) { return c == '(' || c == ')'; }), file.end());
      write_text_file(out / ("xmi-" + file + ".tsv"), t.str());
    }
    write_json_file(out / "xmi.json", hj);
    write_text_file(out / "xmi.svg", analysis::histogram_svg(series, "Token XMI on the test set"));
  }

  // Quartile deltas of each run against the first, averaged over shared seeds.
  if (!corpus.test.empty() && corpus.domains.size() >= 2) {
    analysis::KeywordOptions ko;
    ko.top_fraction = o.top_fraction;
    const auto keywords = analysis::extract_tfidf_keywords(corpus.train, corpus.domains.size(), ko);
    const auto& base = runs.front();
    nlohmann::json qj = nlohmann::json::array();
    for (const auto& r : runs) {
      std::vector<nlohmann::json> per_seed;
      std::array<double, 4> sum{};
      std::array<std::size_t, 4> n{};
      for (const auto& s : r.summary.seeds) {
        const auto a_path = seed_dir(r.dir, s.seed) / "test.hyp", b_path = seed_dir(base.dir, s.seed) / "test.hyp";
        if (!fs::exists(a_path) || !fs::exists(b_path)) continue;
        const auto rep = analysis::quartile_report(corpus.test, keywords, read_hypotheses(a_path), read_hypotheses(b_path));
        for (std::size_t q = 0; q < 4; ++q)
          if (rep.mean_delta[q]) {
            sum[q] += *rep.mean_delta[q];
            ++n[q];
          }
        nlohmann::json rj = rep;
        rj["seed"] = s.seed;
        per_seed.push_back(rj);
        write_text_file(out / ("quartiles-" + r.summary.label + "-vs-" + base.summary.label + "-seed-" +
                               std::to_string(s.seed) + ".tsv"),
                        quartile_tsv(rep, corpus.domains));
      }
      nlohmann::json mean = nlohmann::json::array();
      for (std::size_t q = 0; q < 4; ++q) mean.push_back(n[q] ? nlohmann::json(sum[q] / static_cast<double>(n[q])) : nlohmann::json(nullptr));
      qj.push_back({{"run", r.summary.label}, {"baseline", base.summary.label}, {"mean_delta", mean}, {"seeds", per_seed}});
    }
    write_json_file(out / "quartiles.json", qj);
  }
  log << "report written to " << out.string() << '\n';
  return 0;
}

// ---- sweep ------------------------------------------------------------------

struct SweepOptions {
  std::string config_path;
  std::vector<double> lambdas{0.5, 0.75, 1.0};
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

// Trains one experiment per lambda, applied to both auxiliary weights, and
// picks the value with the best mean dev BLEU.
inline int cmd_sweep(const SweepOptions& o, std::ostream& log = std::cerr) {
  if (o.lambdas.empty()) throw ConfigError("sweep needs at least one lambda");
  const auto base = load_experiment(o.config_path);
  const fs::path out = o.out_dir.empty() ? fs::path(base.output_dir) / "sweep" : fs::path(o.out_dir);
  nlohmann::json rows = nlohmann::json::array();
  int code = 0;
  double best_dev = -1.0;
  std::optional<double> best_lambda;
  for (double lambda : o.lambdas) {
    auto cfg = base;
    cfg.train.objective.lambda1 = cfg.train.objective.lambda2 = lambda;
    if (o.seed) cfg.seeds = {*o.seed};
    std::ostringstream name;
    name << "lambda-" << lambda;
    cfg.output_dir = (out / name.str()).string();
    const int c = run_experiment(cfg, {}, log);
    if (code == 0) code = c;
    const auto summary = read_json_file(fs::path(cfg.output_dir) / "summary.json").get<Summary>();
    std::vector<double> dev;
    for (const auto& s : summary.seeds)
      if (s.history.is_object() && !s.history.at("best_score").is_null()) dev.push_back(s.history.at("best_score").get<double>());
    const auto [dev_mean, dev_std] = mean_std(dev);
    rows.push_back({{"lambda", lambda}, {"dev_bleu_mean", dev_mean}, {"dev_bleu_std", dev_std},
                    {"test_bleu_mean", summary.average_mean}, {"test_bleu_std", summary.average_std}});
    if (!dev.empty() && dev_mean > best_dev) {
      best_dev = dev_mean;
      best_lambda = lambda;
    }
  }
  write_json_file(out / "sweep.json", {{"rows", rows}, {"selected_lambda", best_lambda ? nlohmann::json(*best_lambda) : nlohmann::json(nullptr)}});
  std::ostringstream tsv;
  tsv << "lambda\tdev_bleu\ttest_bleu\n";
  for (const auto& r : rows)
    tsv << r.at("lambda").get<double>() << '\t' << pm(r.at("dev_bleu_mean"), r.at("dev_bleu_std")) << '\t'
        << pm(r.at("test_bleu_mean"), r.at("test_bleu_std")) << '\n';
  write_text_file(out / "sweep.tsv", tsv.str());
  return code;
}

}  // namespace mimt::cli
