// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "mimt/data.hpp"
#include "mimt/model.hpp"

namespace fixtures {

using mimt::numerics::Rng;

inline mimt::model::ModelConfig toy_config(std::size_t vocab = 12, std::size_t domains = 2, std::size_t layers = 2) {
  mimt::model::ModelConfig c;
  c.encoder_layers = layers;
  c.decoder_layers = layers;
  c.dim = 8;
  c.ffn_dim = 16;
  c.heads = 2;
  c.bottleneck = 4;
  c.n_domains = domains;
  c.vocab_size = vocab;
  c.max_positions = 32;
  c.dropout = 0.1;
  return c;
}

// A single-domain batch of random ids with ragged lengths.
inline mimt::data::Batch random_batch(Rng& rng, std::size_t vocab, std::size_t domain, std::size_t rows = 3,
                                      std::size_t max_len = 5) {
  std::vector<mimt::data::ParallelExample> examples;
  for (std::size_t r = 0; r < rows; ++r) {
    mimt::data::ParallelExample ex;
    ex.domain = mimt::data::DomainId{domain};
    ex.index = r;
    const auto sl = 1 + rng.uniform_int(max_len), tl = 1 + rng.uniform_int(max_len);
    for (std::size_t i = 0; i < sl; ++i) ex.source.push_back(4 + static_cast<int>(rng.uniform_int(vocab - 4)));
    for (std::size_t i = 0; i + 1 < tl; ++i) ex.target.push_back(4 + static_cast<int>(rng.uniform_int(vocab - 4)));
    ex.target.push_back(mimt::data::Vocab::kEos);
    examples.push_back(std::move(ex));
  }
  std::vector<const mimt::data::ParallelExample*> ptrs;
  for (const auto& e : examples) ptrs.push_back(&e);
  return mimt::data::make_batch(ptrs);
}

}  // namespace fixtures
