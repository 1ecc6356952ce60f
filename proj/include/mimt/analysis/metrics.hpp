// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mimt/error.hpp"

namespace mimt::analysis {

using Sentence = std::vector<std::string>;

struct BleuReport {
  double score = 0.0;
  std::array<double, 4> precisions{};
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 1.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;
};

inline void to_json(nlohmann::json& j, const BleuReport& r) {
  j = {{"score", r.score},
       {"precisions", r.precisions},
       {"brevity_penalty", r.brevity_penalty},
       {"hypothesis_length", r.hypothesis_length},
       {"reference_length", r.reference_length}};
}

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[std::vector<std::string>(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i + n))];
  return out;
}

inline void check_aligned(const char* what, std::size_t hyps, std::size_t refs) {
  if (hyps != refs)
    throw DataError(std::string(what) + ": " + std::to_string(hyps) + " hypotheses but " + std::to_string(refs) +
                    " references");
  if (hyps == 0) throw DataError(std::string(what) + ": empty corpus");
}

}  // namespace detail

// Corpus BLEU-4 on pre-tokenized text with clipped n-gram counts. With
// add_one, orders 2..4 use (matches + 1) / (total + 1).
inline BleuReport corpus_bleu(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
                              bool add_one = false) {
  detail::check_aligned("corpus_bleu", hypotheses.size(), references.size());
  BleuReport r;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    r.hypothesis_length += hypotheses[s].size();
    r.reference_length += references[s].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hyp = detail::ngram_counts(hypotheses[s], n);
      const auto ref = detail::ngram_counts(references[s], n);
      for (const auto& [gram, count] : hyp) {
        auto it = ref.find(gram);
        r.matches[n - 1] += std::min(count, it == ref.end() ? std::size_t{0} : it->second);
        r.totals[n - 1] += count;
      }
    }
  }
  double log_sum = 0.0;
  bool zero = r.hypothesis_length == 0;
  for (std::size_t n = 0; n < 4; ++n) {
    double p;
    if (add_one && n > 0)
      p = (static_cast<double>(r.matches[n]) + 1.0) / (static_cast<double>(r.totals[n]) + 1.0);
    else
      p = r.totals[n] ? static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]) : 0.0;
    r.precisions[n] = p;
    if (p == 0.0) zero = true;
    else log_sum += std::log(p);
  }
  if (r.hypothesis_length > 0 && r.hypothesis_length < r.reference_length)
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.reference_length) / static_cast<double>(r.hypothesis_length));
  r.score = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

struct ChrfReport {
  double score = 0.0;
  std::size_t order = 6;
  double beta = 2.0;
};

inline void to_json(nlohmann::json& j, const ChrfReport& r) {
  j = {{"score", r.score}, {"order", r.order}, {"beta", r.beta}};
}

namespace detail {

// Code points of the sentence with spaces removed.
inline std::vector<char32_t> characters(const Sentence& s) {
  std::vector<char32_t> out;
  for (const auto& tok : s)
    for (std::size_t i = 0; i < tok.size();) {
      const auto c = static_cast<unsigned char>(tok[i]);
      std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
      len = std::min(len, tok.size() - i);
      char32_t cp = len == 1 ? c : c & (0xFF >> (len + 1));
      for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(tok[i + k]) & 0x3F);
      if (cp != U' ') out.push_back(cp);
      i += len;
    }
  return out;
}

inline std::map<std::u32string, std::size_t> char_ngrams(const std::vector<char32_t>& chars, std::size_t n) {
  std::map<std::u32string, std::size_t> out;
  for (std::size_t i = 0; i + n <= chars.size(); ++i) ++out[std::u32string(chars.begin() + static_cast<long>(i), chars.begin() + static_cast<long>(i + n))];
  return out;
}

}  // namespace detail

// Corpus chrF: character n-gram statistics summed over the corpus, F_beta per
// order, averaged over the orders where both sides have n-grams.
inline ChrfReport chrf(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
                       std::size_t order = 6, double beta = 2.0) {
  detail::check_aligned("chrf", hypotheses.size(), references.size());
  if (order == 0) throw ConfigError("chrf: order must be positive");
  std::vector<double> matches(order, 0.0), hyp_total(order, 0.0), ref_total(order, 0.0);
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto h = detail::characters(hypotheses[s]);
    const auto r = detail::characters(references[s]);
    for (std::size_t n = 1; n <= order; ++n) {
      const auto hg = detail::char_ngrams(h, n);
      const auto rg = detail::char_ngrams(r, n);
      for (const auto& [g, c] : hg) {
        hyp_total[n - 1] += static_cast<double>(c);
        auto it = rg.find(g);
        if (it != rg.end()) matches[n - 1] += static_cast<double>(std::min(c, it->second));
      }
      for (const auto& [g, c] : rg) ref_total[n - 1] += static_cast<double>(c);
    }
  }
  ChrfReport rep;
  rep.order = order;
  rep.beta = beta;
  const double b2 = beta * beta;
  double sum = 0.0;
  std::size_t effective = 0;
  for (std::size_t n = 0; n < order; ++n) {
    if (hyp_total[n] == 0.0 || ref_total[n] == 0.0) continue;
    ++effective;
    const double p = matches[n] / hyp_total[n], r = matches[n] / ref_total[n];
    const double denom = b2 * p + r;
    if (denom > 0.0) sum += (1.0 + b2) * p * r / denom;
  }
  rep.score = effective ? 100.0 * sum / static_cast<double>(effective) : 0.0;
  return rep;
}

}  // namespace mimt::analysis
