// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <tuple>
#include <vector>

#include "mimt/analysis/histogram.hpp"
#include "mimt/analysis/metrics.hpp"
#include "mimt/data/batching.hpp"
#include "mimt/data/synthetic.hpp"
#include "mimt/model/forward.hpp"

namespace mimt::analysis {

using SelectorFn = std::function<model::AdapterSelector(std::size_t domain)>;

inline SelectorFn domain_selector() {
  return [](std::size_t d) { return model::AdapterSelector::domain(d); };
}
inline SelectorFn fixed_selector(model::AdapterSelector sel) {
  return [sel](std::size_t) { return sel; };
}

// Teacher-forced log-probability of every gold target token (EOS included),
// ordered by (sentence, position). `sentence` is ParallelExample::index.
struct GoldLogProbs {
  std::vector<std::size_t> sentence;
  std::vector<std::size_t> position;
  std::vector<int> token;
  std::vector<double> logp;
};

inline GoldLogProbs gold_logprobs(const model::ModelParams& p, const SelectorFn& selector,
                                  const std::vector<data::ParallelExample>& examples, std::size_t max_tokens = 4096) {
  numerics::NoGradScope no_grad;
  struct Entry {
    std::size_t sentence, position;
    int token;
    double logp;
  };
  std::vector<Entry> entries;
  for (const auto& batch : data::make_ordered_batches(examples, max_tokens)) {
    const auto logp = model::forward(p, batch, selector(batch.domain.index));
    const std::size_t v = p.config.vocab_size;
    for (std::size_t r = 0; r < batch.rows; ++r)
      for (std::size_t t = 0; t < batch.target_lengths[r]; ++t) {
        const std::size_t row = r * batch.target_len + t;
        const int tok = batch.target[row];
        entries.push_back({batch.example_index[r], t, tok, logp[row * v + static_cast<std::size_t>(tok)]});
      }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.sentence, a.position) < std::tie(b.sentence, b.position);
  });
  GoldLogProbs out;
  for (const auto& e : entries) {
    out.sentence.push_back(e.sentence);
    out.position.push_back(e.position);
    out.token.push_back(e.token);
    out.logp.push_back(e.logp);
  }
  return out;
}

struct TokenScore {
  std::size_t sentence = 0;
  std::size_t position = 0;
  int token = 0;
  double logp_da = 0.0;
  double logp_g = 0.0;

  double p_da() const { return std::exp(logp_da); }
  double p_g() const { return std::exp(logp_g); }
  double xmi(XmiVariant v) const { return v == XmiVariant::Difference ? p_da() - p_g() : logp_da - logp_g; }
};

inline std::vector<TokenScore> pair_scores(const GoldLogProbs& da, const GoldLogProbs& g) {
  if (da.token.size() != g.token.size()) throw DataError("token scores of the two passes are not aligned");
  std::vector<TokenScore> out(da.token.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (da.sentence[i] != g.sentence[i] || da.position[i] != g.position[i] || da.token[i] != g.token[i])
      throw DataError("token scores of the two passes are not aligned at entry " + std::to_string(i));
    out[i] = {da.sentence[i], da.position[i], da.token[i], da.logp[i], g.logp[i]};
  }
  return out;
}

// p_DA from `model` under `da_selector`; p_G from its general adapter, or
// from a Mixed model (no adapter) when `mixed` is given.
inline std::vector<TokenScore> score_tokens(const model::ModelParams& model, const SelectorFn& da_selector,
                                            const model::ModelParams* mixed,
                                            const std::vector<data::ParallelExample>& examples) {
  const auto da = gold_logprobs(model, da_selector, examples);
  if (!mixed) return pair_scores(da, gold_logprobs(model, fixed_selector(model::AdapterSelector::general()), examples));
  if (mixed->config.vocab_size != model.config.vocab_size)
    throw ConfigError("vocabulary mismatch: model has " + std::to_string(model.config.vocab_size) +
                      " entries, Mixed model " + std::to_string(mixed->config.vocab_size));
  return pair_scores(da, gold_logprobs(*mixed, fixed_selector(model::AdapterSelector::none()), examples));
}

inline std::vector<double> xmi_values(const std::vector<TokenScore>& scores, XmiVariant v) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back(s.xmi(v));
  return out;
}

inline double mean_xmi(const std::vector<TokenScore>& scores, XmiVariant v = XmiVariant::Difference) {
  if (scores.empty()) throw DataError("no scored tokens");
  double sum = 0.0;
  for (const auto& s : scores) sum += s.xmi(v);
  return sum / static_cast<double>(scores.size());
}

inline void write_token_dump(std::ostream& out, const std::vector<TokenScore>& scores, const data::Vocab& vocab,
                             XmiVariant v = XmiVariant::Difference) {
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "sentence_id\tposition\ttoken\tp_da\tp_g\txmi\n";
  for (const auto& s : scores)
    out << s.sentence << '\t' << s.position << '\t' << vocab.token(s.token) << '\t' << s.p_da() << '\t' << s.p_g()
        << '\t' << s.xmi(v) << '\n';
}

// Positional scoring on synthetic data: target position i translates source
// position i, so each gold token inherits the term kind of its source token.
struct TermKindMeans {
  double ambiguous = 0.0;
  double general = 0.0;
  double exclusive = 0.0;
  std::size_t ambiguous_count = 0;
  std::size_t general_count = 0;
  std::size_t exclusive_count = 0;
};

inline TermKindMeans xmi_by_term_kind(const data::SyntheticLexicon& lex, const data::TextSplit& split,
                                      const std::vector<TokenScore>& scores, XmiVariant v = XmiVariant::Difference) {
  TermKindMeans m;
  for (const auto& s : scores) {
    const auto& src = split.at(s.sentence).source;
    if (s.position >= src.size()) continue;  // EOS
    const double x = s.xmi(v);
    switch (lex.kind(src[s.position])) {
      case data::TermKind::Ambiguous: m.ambiguous += x; ++m.ambiguous_count; break;
      case data::TermKind::General: m.general += x; ++m.general_count; break;
      case data::TermKind::Exclusive: m.exclusive += x; ++m.exclusive_count; break;
      case data::TermKind::Unknown: break;
    }
  }
  if (m.ambiguous_count) m.ambiguous /= static_cast<double>(m.ambiguous_count);
  if (m.general_count) m.general /= static_cast<double>(m.general_count);
  if (m.exclusive_count) m.exclusive /= static_cast<double>(m.exclusive_count);
  return m;
}

struct TermAccuracy {
  std::size_t ambiguous_correct = 0;
  std::size_t ambiguous_total = 0;
  std::size_t other_correct = 0;
  std::size_t other_total = 0;

  double ambiguous() const { return ambiguous_total ? static_cast<double>(ambiguous_correct) / static_cast<double>(ambiguous_total) : 0.0; }
  double other() const { return other_total ? static_cast<double>(other_correct) / static_cast<double>(other_total) : 0.0; }
};

inline void to_json(nlohmann::json& j, const TermAccuracy& a) {
  j = {{"ambiguous_accuracy", a.ambiguous()}, {"ambiguous_correct", a.ambiguous_correct},
       {"ambiguous_total", a.ambiguous_total}, {"other_accuracy", a.other()},
       {"other_correct", a.other_correct},     {"other_total", a.other_total}};
}

// Exact match of hypothesis token i against the gold translation of source
// token i.
inline TermAccuracy term_accuracy(const data::SyntheticLexicon& lex, const data::TextSplit& split,
                                  const std::vector<Sentence>& hypotheses) {
  if (hypotheses.size() != split.size())
    throw DataError("term_accuracy: " + std::to_string(hypotheses.size()) + " hypotheses for " +
                    std::to_string(split.size()) + " sentences");
  TermAccuracy acc;
  for (std::size_t s = 0; s < split.size(); ++s) {
    const auto& ex = split[s];
    for (std::size_t i = 0; i < ex.source.size(); ++i) {
      const bool ok = i < hypotheses[s].size() && hypotheses[s][i] == ex.target[i];
      if (lex.kind(ex.source[i]) == data::TermKind::Ambiguous) {
        ++acc.ambiguous_total;
        acc.ambiguous_correct += ok;
      } else {
        ++acc.other_total;
        acc.other_correct += ok;
      }
    }
  }
  return acc;
}

}  // namespace mimt::analysis
