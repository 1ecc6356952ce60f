// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "mimt/data/batching.hpp"
#include "mimt/model/params.hpp"

namespace mimt::model {

namespace ops = numerics;

// Dropout mask source. Two passes built from the same seed draw the same
// masks, provided they request tensors of the same shapes in the same order.
class Dropout {
 public:
  Dropout() = default;
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(Rng(seed)) {}

  bool active() const { return rng_.has_value() && rate_ > 0.0; }

  Tensor operator()(const Tensor& x) {
    if (!active()) return x;
    const double keep = 1.0 / (1.0 - rate_);
    std::vector<double> mask(x.size());
    for (auto& m : mask) m = rng_->uniform() < rate_ ? 0.0 : keep;
    return ops::mul(x, Tensor::constant(x.shape(), std::move(mask)));
  }

 private:
  double rate_ = 0.0;
  std::optional<Rng> rng_;
};

struct ForwardOptions {
  bool train = false;
  std::uint64_t dropout_seed = 0;
};

namespace detail {

inline Tensor linear(const Tensor& x, const Linear& l) { return ops::add(ops::matmul(x, l.w), l.b); }

inline Tensor norm(const Tensor& x, const LayerNormParams& l) { return ops::layer_norm(x, l.gamma, l.beta); }

inline Tensor multi_head(const AttentionParams& a, const Tensor& query_in, const Tensor& kv_in,
                         const std::vector<std::uint8_t>& key_valid, const ops::AttentionShape& shape) {
  Tensor q = linear(query_in, a.q);
  Tensor k = linear(kv_in, a.k);
  Tensor v = linear(kv_in, a.v);
  return linear(ops::attention(q, k, v, key_valid, shape), a.o);
}

inline Tensor apply_adapter(const Tensor& x, const Adapter& a) {
  Tensor h = ops::relu(linear(norm(x, a.ln), a.down));
  return ops::add(x, linear(h, a.up));
}

inline const Adapter* select_adapter(const ModelParams& p, const AdapterSelector& sel, std::size_t slot) {
  switch (sel.kind()) {
    case AdapterSelector::Kind::None:
      return nullptr;
    case AdapterSelector::Kind::General:
      return &p.adapters[p.general_index()][slot];
    case AdapterSelector::Kind::Domain:
      return &p.adapters[sel.domain_index()][slot];
  }
  return nullptr;
}

inline void check_selector(const ModelParams& p, const AdapterSelector& sel) {
  if (sel.kind() == AdapterSelector::Kind::Domain && sel.domain_index() >= p.config.n_domains)
    throw ConfigError("selector " + sel.to_string() + " but the model has " + std::to_string(p.config.n_domains) +
                      " domains");
}

// Token embeddings scaled by sqrt(dim) plus sinusoidal positions.
inline Tensor embed(const ModelParams& p, const Tensor& table, const std::vector<int>& ids, std::size_t rows,
                    std::size_t len) {
  if (len > p.config.max_positions)
    throw DataError("sequence of " + std::to_string(len) + " tokens exceeds max_positions " +
                    std::to_string(p.config.max_positions));
  std::vector<int> pos(rows * len);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < len; ++t) pos[r * len + t] = static_cast<int>(t);
  Tensor positions;
  {
    ops::NoGradScope constant_only;
    positions = ops::embedding(p.positions, pos);
  }
  return ops::add(ops::scale(ops::embedding(table, ids), std::sqrt(static_cast<double>(p.config.dim))), positions);
}

}  // namespace detail

// Encoder states [rows * len, dim].
inline Tensor encode(const ModelParams& p, const std::vector<int>& source, const std::vector<std::uint8_t>& source_mask,
                     std::size_t rows, std::size_t len, const AdapterSelector& sel, Dropout& dropout) {
  detail::check_selector(p, sel);
  Tensor x = dropout(detail::embed(p, p.src_embedding, source, rows, len));
  const ops::AttentionShape shape{rows, len, len, p.config.heads, false};
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const auto& layer = p.encoder[l];
    Tensor h = detail::norm(x, layer.ln_attn);
    x = ops::add(x, dropout(detail::multi_head(layer.attn, h, h, source_mask, shape)));
    h = detail::norm(x, layer.ln_ffn);
    h = detail::linear(ops::relu(detail::linear(h, layer.ffn.in)), layer.ffn.out);
    x = ops::add(x, dropout(h));
    if (const Adapter* a = detail::select_adapter(p, sel, l)) x = detail::apply_adapter(x, *a);
  }
  return detail::norm(x, p.encoder_final);
}

// Teacher-forced decoder; returns log-probabilities [rows * len, V].
inline Tensor decode_logp(const ModelParams& p, const Tensor& memory, const std::vector<std::uint8_t>& source_mask,
                          std::size_t source_len, const std::vector<int>& decoder_input,
                          const std::vector<std::uint8_t>& target_mask, std::size_t rows, std::size_t len,
                          const AdapterSelector& sel, Dropout& dropout) {
  detail::check_selector(p, sel);
  Tensor x = dropout(detail::embed(p, p.tgt_embedding, decoder_input, rows, len));
  const ops::AttentionShape self_shape{rows, len, len, p.config.heads, true};
  const ops::AttentionShape cross_shape{rows, len, source_len, p.config.heads, false};
  const std::size_t offset = p.config.encoder_layers;
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const auto& layer = p.decoder[l];
    Tensor h = detail::norm(x, layer.ln_self);
    x = ops::add(x, dropout(detail::multi_head(layer.self_attn, h, h, target_mask, self_shape)));
    h = detail::norm(x, layer.ln_cross);
    x = ops::add(x, dropout(detail::multi_head(layer.cross_attn, h, memory, source_mask, cross_shape)));
    h = detail::norm(x, layer.ln_ffn);
    h = detail::linear(ops::relu(detail::linear(h, layer.ffn.in)), layer.ffn.out);
    x = ops::add(x, dropout(h));
    if (const Adapter* a = detail::select_adapter(p, sel, offset + l)) x = detail::apply_adapter(x, *a);
  }
  x = detail::norm(x, p.decoder_final);
  return ops::log_softmax(ops::matmul(x, p.output_projection, true));
}

inline void check_batch_selector(const ModelParams& p, const data::Batch& batch, const AdapterSelector& sel) {
  detail::check_selector(p, sel);
  if (sel.kind() != AdapterSelector::Kind::Domain) return;
  for (const auto& d : batch.row_domains)
    if (d.index != sel.domain_index())
      throw ConfigError("selector " + sel.to_string() + " applied to a batch row from domain " + std::to_string(d.index));
}

// Teacher-forced log-probability rows [rows * target_len, V] for a batch.
inline Tensor forward(const ModelParams& p, const data::Batch& batch, const AdapterSelector& sel,
                      const ForwardOptions& opts = {}) {
  check_batch_selector(p, batch, sel);
  Dropout dropout = opts.train ? Dropout(p.config.dropout, opts.dropout_seed) : Dropout();
  Tensor memory = encode(p, batch.source, batch.source_mask, batch.rows, batch.source_len, sel, dropout);
  return decode_logp(p, memory, batch.source_mask, batch.source_len, batch.decoder_input, batch.target_mask,
                     batch.rows, batch.target_len, sel, dropout);
}

// Probability rows, the exponentiated forward output.
inline Tensor forward_probs(const ModelParams& p, const data::Batch& batch, const AdapterSelector& sel,
                            const ForwardOptions& opts = {}) {
  return ops::exp(forward(p, batch, sel, opts));
}

struct DualOutput {
  Tensor logp_da;
  Tensor logp_g;
};

// One pass through the batch's domain adapter and one through the general
// adapter, with identical dropout masks.
inline DualOutput dual_forward(const ModelParams& p, const data::Batch& batch, const ForwardOptions& opts = {}) {
  const auto sel = AdapterSelector::domain(batch.domain.index);
  return {forward(p, batch, sel, opts), forward(p, batch, AdapterSelector::general(), opts)};
}

}  // namespace mimt::model
