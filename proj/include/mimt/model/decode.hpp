// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "mimt/data/vocab.hpp"
#include "mimt/model/forward.hpp"

namespace mimt::model {

struct Hypothesis {
  std::vector<int> tokens;  // generated ids, EOS excluded
  double score = 0.0;       // sum of token log-probabilities, EOS included
  bool finished = false;    // false when max_length was hit without EOS
};

// Given k prefixes (generated ids so far, BOS implied), returns k rows of
// next-token log-probabilities, row-major [k, V].
using StepScorer = std::function<std::vector<double>(const std::vector<std::vector<int>>&)>;

inline double normalized_score(const Hypothesis& h, double length_penalty) {
  const double len = static_cast<double>(h.tokens.size() + (h.finished ? 1 : 0));
  return len > 0 ? h.score / std::pow(len, length_penalty) : h.score;
}

namespace detail {

// Higher score first; equal scores go to the lexicographically smaller
// sequence.
inline bool better(double sa, const std::vector<int>& ta, double sb, const std::vector<int>& tb) {
  if (sa != sb) return sa > sb;
  return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
}

inline Hypothesis pick_best(const std::vector<Hypothesis>& pool, double length_penalty) {
  const Hypothesis* best = nullptr;
  double best_score = 0.0;
  std::vector<int> best_key;
  for (const auto& h : pool) {
    const double s = normalized_score(h, length_penalty);
    std::vector<int> key = h.tokens;
    if (h.finished) key.push_back(data::Vocab::kEos);
    if (!best || better(s, key, best_score, best_key)) {
      best = &h;
      best_score = s;
      best_key = std::move(key);
    }
  }
  return *best;
}

}  // namespace detail

// Beam search. Each step extends every live hypothesis by every token and
// keeps the `beam` best candidates by raw score; those ending in EOS are set
// aside as finished, the rest stay live.
// Search ends once `beam` hypotheses have finished or max_length steps ran.
// The result is the best finished hypothesis by length-normalized score, or
// the best unfinished one (finished == false) if none finished.
inline Hypothesis beam_search(const StepScorer& scorer, std::size_t vocab_size, int eos, const DecodeConfig& cfg) {
  if (cfg.beam < 1) throw ConfigError("beam must be at least 1");
  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < cfg.max_length && !live.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& h : live) prefixes.push_back(h.tokens);
    const auto rows = scorer(prefixes);
    if (rows.size() != live.size() * vocab_size)
      throw ShapeError("beam_search", {live.size(), vocab_size}, {rows.size()});

    struct Candidate {
      double score;
      std::vector<int> key;  // tokens including the new one
    };
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * vocab_size);
    for (std::size_t h = 0; h < live.size(); ++h)
      for (std::size_t v = 0; v < vocab_size; ++v) {
        const double lp = rows[h * vocab_size + v];
        if (lp == -std::numeric_limits<double>::infinity()) continue;
        std::vector<int> key = live[h].tokens;
        key.push_back(static_cast<int>(v));
        candidates.push_back({live[h].score + lp, std::move(key)});
      }
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& a, const Candidate& b) { return detail::better(a.score, a.key, b.score, b.key); });

    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < candidates.size() && i < cfg.beam; ++i) {
      auto& c = candidates[i];
      Hypothesis h;
      h.score = c.score;
      h.finished = c.key.back() == eos;
      if (h.finished) c.key.pop_back();
      h.tokens = std::move(c.key);
      (h.finished ? finished : next).push_back(std::move(h));
    }
    live = std::move(next);
    if (finished.size() >= cfg.beam) break;
  }
  if (!finished.empty()) return detail::pick_best(finished, cfg.length_penalty);
  if (live.empty()) throw NumericError("beam_search: every continuation has zero probability");
  return detail::pick_best(live, cfg.length_penalty);
}

// Argmax decoding; ties go to the smaller token id.
inline Hypothesis greedy_search(const StepScorer& scorer, std::size_t vocab_size, int eos, std::size_t max_length) {
  Hypothesis h;
  for (std::size_t step = 0; step < max_length; ++step) {
    const auto row = scorer({h.tokens});
    if (row.size() != vocab_size) throw ShapeError("greedy_search", {vocab_size}, {row.size()});
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    h.score += row[static_cast<std::size_t>(best)];
    if (best == eos) {
      h.finished = true;
      return h;
    }
    h.tokens.push_back(best);
  }
  return h;
}

// Scores prefixes with the model for one source sentence.
class ModelScorer {
 public:
  ModelScorer(const ModelParams& p, const std::vector<int>& source, const AdapterSelector& sel)
      : p_(p), sel_(sel), source_len_(source.size()), source_mask_(source.size(), 1) {
    if (source.empty()) throw DataError("cannot decode an empty source");
    numerics::NoGradScope no_grad;
    Dropout off;
    memory_ = encode(p, source, source_mask_, 1, source_len_, sel, off);
  }

  std::vector<double> operator()(const std::vector<std::vector<int>>& prefixes) const {
    numerics::NoGradScope no_grad;
    const std::size_t k = prefixes.size();
    const std::size_t len = prefixes.front().size() + 1;
    std::vector<int> input(k * len, data::Vocab::kBos);
    for (std::size_t r = 0; r < k; ++r) {
      if (prefixes[r].size() + 1 != len) throw ShapeError("ModelScorer", {len}, {prefixes[r].size() + 1});
      std::copy(prefixes[r].begin(), prefixes[r].end(), input.begin() + static_cast<long>(r * len + 1));
    }
    std::vector<double> tiled;
    tiled.reserve(k * memory_.size());
    for (std::size_t r = 0; r < k; ++r) tiled.insert(tiled.end(), memory_.values().begin(), memory_.values().end());
    Tensor memory = Tensor::constant({k * source_len_, p_.config.dim}, std::move(tiled));
    std::vector<std::uint8_t> src_mask(k * source_len_, 1), tgt_mask(k * len, 1);
    Dropout off;
    Tensor logp = decode_logp(p_, memory, src_mask, source_len_, input, tgt_mask, k, len, sel_, off);
    const std::size_t v = p_.config.vocab_size;
    std::vector<double> out(k * v);
    for (std::size_t r = 0; r < k; ++r)
      std::copy_n(logp.values().data() + (r * len + len - 1) * v, v, out.data() + r * v);
    return out;
  }

 private:
  const ModelParams& p_;
  AdapterSelector sel_;
  std::size_t source_len_;
  std::vector<std::uint8_t> source_mask_;
  Tensor memory_;
};

inline Hypothesis beam_decode(const ModelParams& p, const std::vector<int>& source, const AdapterSelector& sel,
                              const DecodeConfig& cfg) {
  cfg.validate(p.config.max_positions);
  ModelScorer scorer(p, source, sel);
  if (cfg.beam == 1)
    return greedy_search(std::cref(scorer), p.config.vocab_size, data::Vocab::kEos, cfg.max_length);
  return beam_search(std::cref(scorer), p.config.vocab_size, data::Vocab::kEos, cfg);
}

// Greedy decoding of many sources of one domain at once. Returns generated
// ids (EOS excluded) per source, in input order.
inline std::vector<std::vector<int>> greedy_decode_batch(const ModelParams& p,
                                                         const std::vector<const std::vector<int>*>& sources,
                                                         const AdapterSelector& sel, std::size_t max_length) {
  if (sources.empty()) return {};
  if (max_length > p.config.max_positions) throw ConfigError("max_length exceeds max_positions");
  numerics::NoGradScope no_grad;
  const std::size_t rows = sources.size();
  std::size_t src_len = 0;
  for (const auto* s : sources) {
    if (s->empty()) throw DataError("cannot decode an empty source");
    src_len = std::max(src_len, s->size());
  }
  std::vector<int> src(rows * src_len, data::Vocab::kPad);
  std::vector<std::uint8_t> src_mask(rows * src_len, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < sources[r]->size(); ++i) {
      src[r * src_len + i] = (*sources[r])[i];
      src_mask[r * src_len + i] = 1;
    }
  Dropout off;
  Tensor memory = encode(p, src, src_mask, rows, src_len, sel, off);

  const std::size_t v = p.config.vocab_size;
  std::vector<std::vector<int>> out(rows);
  std::vector<bool> done(rows, false);
  std::size_t remaining = rows;
  for (std::size_t step = 0; step < max_length && remaining > 0; ++step) {
    const std::size_t len = step + 1;
    std::vector<int> input(rows * len, data::Vocab::kPad);
    for (std::size_t r = 0; r < rows; ++r) {
      input[r * len] = data::Vocab::kBos;
      for (std::size_t t = 0; t < out[r].size() && t + 1 < len; ++t) input[r * len + t + 1] = out[r][t];
    }
    std::vector<std::uint8_t> tgt_mask(rows * len, 1);
    Tensor logp = decode_logp(p, memory, src_mask, src_len, input, tgt_mask, rows, len, sel, off);
    for (std::size_t r = 0; r < rows; ++r) {
      if (done[r]) continue;
      const double* row = logp.values().data() + (r * len + len - 1) * v;
      const auto best = static_cast<int>(std::max_element(row, row + v) - row);
      if (best == data::Vocab::kEos) {
        done[r] = true;
        --remaining;
      } else {
        out[r].push_back(best);
      }
    }
  }
  return out;
}

}  // namespace mimt::model
