// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mimt/data/vocab.hpp"
#include "mimt/numerics/rng.hpp"

namespace mimt::data {

// A padded single-domain minibatch. Matrices are row-major [rows, length].
struct Batch {
  DomainId domain;
  std::size_t rows = 0;
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  std::vector<int> source;         // PAD-padded
  std::vector<int> target;         // gold ids, EOS-terminated, PAD-padded
  std::vector<int> decoder_input;  // BOS followed by target shifted right
  std::vector<std::size_t> source_lengths;
  std::vector<std::size_t> target_lengths;
  std::vector<std::uint8_t> source_mask;  // 1 on real tokens
  std::vector<std::uint8_t> target_mask;
  std::vector<DomainId> row_domains;
  std::vector<std::size_t> example_index;

  std::size_t target_tokens() const {
    std::size_t n = 0;
    for (auto len : target_lengths) n += len;
    return n;
  }
  std::size_t padded_target_tokens() const { return rows * target_len; }
};

inline Batch make_batch(const std::vector<const ParallelExample*>& rows) {
  if (rows.empty()) throw DataError("make_batch: no rows");
  Batch b;
  b.domain = rows.front()->domain;
  b.rows = rows.size();
  for (const auto* ex : rows) {
    if (ex->domain != b.domain) throw DataError("make_batch: rows from different domains");
    if (ex->source.empty() || ex->target.empty() || ex->target.back() != Vocab::kEos)
      throw DataError("make_batch: example " + std::to_string(ex->index) + " is empty or lacks EOS");
    b.source_len = std::max(b.source_len, ex->source.size());
    b.target_len = std::max(b.target_len, ex->target.size());
  }
  b.source.assign(b.rows * b.source_len, Vocab::kPad);
  b.target.assign(b.rows * b.target_len, Vocab::kPad);
  b.decoder_input.assign(b.rows * b.target_len, Vocab::kPad);
  b.source_mask.assign(b.rows * b.source_len, 0);
  b.target_mask.assign(b.rows * b.target_len, 0);
  for (std::size_t r = 0; r < b.rows; ++r) {
    const auto& ex = *rows[r];
    for (std::size_t i = 0; i < ex.source.size(); ++i) {
      b.source[r * b.source_len + i] = ex.source[i];
      b.source_mask[r * b.source_len + i] = 1;
    }
    for (std::size_t i = 0; i < ex.target.size(); ++i) {
      b.target[r * b.target_len + i] = ex.target[i];
      b.decoder_input[r * b.target_len + i] = i == 0 ? Vocab::kBos : ex.target[i - 1];
      b.target_mask[r * b.target_len + i] = 1;
    }
    b.source_lengths.push_back(ex.source.size());
    b.target_lengths.push_back(ex.target.size());
    b.row_domains.push_back(ex.domain);
    b.example_index.push_back(ex.index);
  }
  return b;
}

namespace detail {

inline void check_fits(const ParallelExample& ex, std::size_t max_tokens) {
  const auto len = std::max(ex.source.size(), ex.target.size());
  if (len > max_tokens)
    throw DataError("example " + std::to_string(ex.index) + " has " + std::to_string(len) +
                    " tokens, more than the batch budget of " + std::to_string(max_tokens));
}

// Consecutive greedy packing: add rows while rows * longest target fits.
inline std::vector<std::vector<const ParallelExample*>> pack(const std::vector<const ParallelExample*>& order,
                                                             std::size_t max_tokens) {
  std::vector<std::vector<const ParallelExample*>> groups;
  std::vector<const ParallelExample*> current;
  std::size_t longest = 0;
  for (const auto* ex : order) {
    const std::size_t grown = std::max(longest, ex->target.size());
    if (!current.empty() && (current.size() + 1) * grown > max_tokens) {
      groups.push_back(std::move(current));
      current.clear();
      longest = 0;
    }
    current.push_back(ex);
    longest = std::max(longest, ex->target.size());
  }
  if (!current.empty()) groups.push_back(std::move(current));
  return groups;
}

inline std::map<DomainId, std::vector<const ParallelExample*>> by_domain(const std::vector<ParallelExample>& split,
                                                                         std::size_t max_tokens) {
  if (max_tokens == 0) throw ConfigError("max_tokens must be positive");
  std::map<DomainId, std::vector<const ParallelExample*>> out;
  for (const auto& ex : split) {
    check_fits(ex, max_tokens);
    out[ex.domain].push_back(&ex);
  }
  return out;
}

}  // namespace detail

// One training epoch: each domain's examples are shuffled and packed, then
// batches are interleaved by drawing uniformly among domains that still have
// batches left.
inline std::vector<Batch> make_batches(const std::vector<ParallelExample>& split, std::size_t max_tokens,
                                       numerics::Rng& rng) {
  auto domains = detail::by_domain(split, max_tokens);
  std::vector<std::vector<std::vector<const ParallelExample*>>> queues;
  for (auto& [domain, list] : domains) {
    rng.shuffle(list);
    queues.push_back(detail::pack(list, max_tokens));
  }
  std::vector<std::size_t> next(queues.size(), 0);
  std::vector<Batch> out;
  while (true) {
    std::vector<std::size_t> open;
    for (std::size_t q = 0; q < queues.size(); ++q)
      if (next[q] < queues[q].size()) open.push_back(q);
    if (open.empty()) break;
    const std::size_t q = open[open.size() == 1 ? 0 : rng.uniform_int(open.size())];
    out.push_back(make_batch(queues[q][next[q]++]));
  }
  return out;
}

// Evaluation order: domains in id order, examples in split order.
inline std::vector<Batch> make_ordered_batches(const std::vector<ParallelExample>& split, std::size_t max_tokens) {
  auto domains = detail::by_domain(split, max_tokens);
  std::vector<Batch> out;
  for (const auto& [domain, list] : domains)
    for (const auto& group : detail::pack(list, max_tokens)) out.push_back(make_batch(group));
  return out;
}

}  // namespace mimt::data
