// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mimt/model/config.hpp"
#include "mimt/numerics/rng.hpp"
#include "mimt/numerics/ops.hpp"

namespace mimt::model {

using numerics::Rng;
using numerics::Shape;
using numerics::Tensor;

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

struct AttentionParams {
  Linear q, k, v, o;
};

struct FeedForwardParams {
  Linear in, out;
};

struct EncoderLayer {
  LayerNormParams ln_attn;
  AttentionParams attn;
  LayerNormParams ln_ffn;
  FeedForwardParams ffn;
};

struct DecoderLayer {
  LayerNormParams ln_self;
  AttentionParams self_attn;
  LayerNormParams ln_cross;
  AttentionParams cross_attn;
  LayerNormParams ln_ffn;
  FeedForwardParams ffn;
};

// Residual bottleneck: x + up(relu(down(layer_norm(x)))).
struct Adapter {
  LayerNormParams ln;
  Linear down;
  Linear up;
};

// Sinusoidal position table [max_positions, dim].
inline Tensor sinusoidal_positions(std::size_t max_positions, std::size_t dim) {
  std::vector<double> table(max_positions * dim);
  const std::size_t half = dim / 2;
  for (std::size_t pos = 0; pos < max_positions; ++pos)
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half > 1 ? half - 1 : 1));
      table[pos * dim + i] = std::sin(static_cast<double>(pos) * freq);
      table[pos * dim + half + i] = std::cos(static_cast<double>(pos) * freq);
    }
  return Tensor::constant({max_positions, dim}, std::move(table));
}

// All weights of the model. Copying shares the underlying tensors; use
// clone() for an independent snapshot.
struct ModelParams {
  ModelConfig config;
  Tensor src_embedding;  // [V, d]; with sharing, these three are one tensor
  Tensor tgt_embedding;
  Tensor output_projection;
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  LayerNormParams encoder_final;
  LayerNormParams decoder_final;
  // adapters[k][slot]: k < n_domains is a domain adapter, k == n_domains the
  // general one. Slots run over encoder layers, then decoder layers.
  std::vector<std::vector<Adapter>> adapters;
  Tensor positions;

  std::size_t general_index() const { return config.n_domains; }
  std::size_t adapter_slots() const { return config.encoder_layers + config.decoder_layers; }

  // Every trainable tensor once, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto add = [&](const std::string& name, const Tensor& t) { out.emplace_back(name, t); };
    auto add_linear = [&](const std::string& p, const Linear& l) {
      add(p + ".w", l.w);
      add(p + ".b", l.b);
    };
    auto add_ln = [&](const std::string& p, const LayerNormParams& l) {
      add(p + ".gamma", l.gamma);
      add(p + ".beta", l.beta);
    };
    auto add_attn = [&](const std::string& p, const AttentionParams& a) {
      add_linear(p + ".q", a.q);
      add_linear(p + ".k", a.k);
      add_linear(p + ".v", a.v);
      add_linear(p + ".o", a.o);
    };
    if (config.share_embeddings) {
      add("embedding", src_embedding);
    } else {
      add("src_embedding", src_embedding);
      add("tgt_embedding", tgt_embedding);
      add("output_projection", output_projection);
    }
    for (std::size_t l = 0; l < encoder.size(); ++l) {
      const std::string p = "encoder." + std::to_string(l);
      add_ln(p + ".ln_attn", encoder[l].ln_attn);
      add_attn(p + ".attn", encoder[l].attn);
      add_ln(p + ".ln_ffn", encoder[l].ln_ffn);
      add_linear(p + ".ffn.in", encoder[l].ffn.in);
      add_linear(p + ".ffn.out", encoder[l].ffn.out);
    }
    for (std::size_t l = 0; l < decoder.size(); ++l) {
      const std::string p = "decoder." + std::to_string(l);
      add_ln(p + ".ln_self", decoder[l].ln_self);
      add_attn(p + ".self_attn", decoder[l].self_attn);
      add_ln(p + ".ln_cross", decoder[l].ln_cross);
      add_attn(p + ".cross_attn", decoder[l].cross_attn);
      add_ln(p + ".ln_ffn", decoder[l].ln_ffn);
      add_linear(p + ".ffn.in", decoder[l].ffn.in);
      add_linear(p + ".ffn.out", decoder[l].ffn.out);
    }
    add_ln("encoder.final", encoder_final);
    add_ln("decoder.final", decoder_final);
    for (std::size_t k = 0; k < adapters.size(); ++k)
      for (std::size_t s = 0; s < adapters[k].size(); ++s) {
        const std::string p = adapter_prefix(k, s);
        add_ln(p + ".ln", adapters[k][s].ln);
        add_linear(p + ".down", adapters[k][s].down);
        add_linear(p + ".up", adapters[k][s].up);
      }
    return out;
  }

  std::string adapter_prefix(std::size_t k, std::size_t slot) const {
    return "adapter." + (k == general_index() ? std::string("general") : std::to_string(k)) + "." +
           std::to_string(slot);
  }

  // Trainable tensors of adapter k (k == n_domains for the general adapter).
  std::vector<Tensor> adapter_tensors(std::size_t k) const {
    std::vector<Tensor> out;
    for (const auto& a : adapters.at(k))
      for (const Tensor* t : {&a.ln.gamma, &a.ln.beta, &a.down.w, &a.down.b, &a.up.w, &a.up.b}) out.push_back(*t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named()) n += t.size();
    return n;
  }

  // Deep copy that preserves the embedding sharing structure.
  ModelParams clone() const {
    ModelParams out = *this;
    std::map<const numerics::detail::Node*, Tensor> copies;
    auto copy = [&](Tensor& t) {
      auto it = copies.find(t.node());
      if (it == copies.end()) {
        std::vector<double> values(t.values().begin(), t.values().end());
        Tensor fresh = Tensor::parameter(t.shape(), std::move(values), t.name());
        it = copies.emplace(t.node(), fresh).first;
      }
      t = it->second;
    };
    out.for_each_tensor(copy);
    return out;
  }

  // Overwrites values from `other`, which must have the same structure.
  void assign_from(const ModelParams& other) {
    auto mine = named();
    auto theirs = other.named();
    if (mine.size() != theirs.size()) throw ConfigError("assign_from: parameter structure differs");
    for (std::size_t i = 0; i < mine.size(); ++i) {
      if (mine[i].first != theirs[i].first || mine[i].second.shape() != theirs[i].second.shape())
        throw ConfigError("assign_from: parameter '" + mine[i].first + "' differs");
      auto dst = mine[i].second.mutable_values();
      auto src = theirs[i].second.values();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f(src_embedding);
    f(tgt_embedding);
    f(output_projection);
    auto linear = [&](Linear& l) {
      f(l.w);
      f(l.b);
    };
    auto ln = [&](LayerNormParams& l) {
      f(l.gamma);
      f(l.beta);
    };
    auto attn = [&](AttentionParams& a) {
      linear(a.q);
      linear(a.k);
      linear(a.v);
      linear(a.o);
    };
    for (auto& l : encoder) {
      ln(l.ln_attn);
      attn(l.attn);
      ln(l.ln_ffn);
      linear(l.ffn.in);
      linear(l.ffn.out);
    }
    for (auto& l : decoder) {
      ln(l.ln_self);
      attn(l.self_attn);
      ln(l.ln_cross);
      attn(l.cross_attn);
      ln(l.ln_ffn);
      linear(l.ffn.in);
      linear(l.ffn.out);
    }
    ln(encoder_final);
    ln(decoder_final);
    for (auto& bank : adapters)
      for (auto& a : bank) {
        ln(a.ln);
        linear(a.down);
        linear(a.up);
      }
  }
};

namespace detail {

inline Tensor xavier(Rng& rng, std::size_t in, std::size_t out, const std::string& name) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  return Tensor::parameter({in, out}, rng.uniform_values(in * out, -limit, limit), name);
}
inline Tensor filled(std::size_t n, double v, const std::string& name) {
  return Tensor::parameter({n}, std::vector<double>(n, v), name);
}
inline Linear init_linear(Rng& rng, std::size_t in, std::size_t out) {
  return {xavier(rng, in, out, ""), filled(out, 0.0, "")};
}
inline LayerNormParams init_ln(std::size_t d) { return {filled(d, 1.0, ""), filled(d, 0.0, "")}; }
inline AttentionParams init_attention(Rng& rng, std::size_t d) {
  return {init_linear(rng, d, d), init_linear(rng, d, d), init_linear(rng, d, d), init_linear(rng, d, d)};
}
inline Tensor gaussian(Rng& rng, Shape shape, double stddev) {
  const auto n = numerics::shape_size(shape);
  return Tensor::parameter(std::move(shape), rng.normal_values(n, 0.0, stddev));
}
inline Adapter init_adapter(Rng& rng, std::size_t d, std::size_t b, double stddev) {
  Adapter a;
  a.ln = {gaussian(rng, {d}, stddev), gaussian(rng, {d}, stddev)};
  a.down = {gaussian(rng, {d, b}, stddev), gaussian(rng, {b}, stddev)};
  a.up = {gaussian(rng, {b, d}, stddev), gaussian(rng, {d}, stddev)};
  return a;
}

}  // namespace detail

// Body: Xavier-uniform weights, zero biases, unit layer-norm gains,
// embeddings N(0, 1/dim). Adapters: every entry N(0, adapter_init_std^2).
inline ModelParams init_model(const ModelConfig& config, const Rng& seed_rng) {
  config.validate();
  ModelParams p;
  p.config = config;
  const std::size_t d = config.dim, v = config.vocab_size;
  Rng body = seed_rng.split(1);
  Rng adapter_rng = seed_rng.split(2);
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(d));

  p.src_embedding = detail::gaussian(body, {v, d}, embed_std);
  if (config.share_embeddings) {
    p.tgt_embedding = p.src_embedding;
    p.output_projection = p.src_embedding;
  } else {
    p.tgt_embedding = detail::gaussian(body, {v, d}, embed_std);
    p.output_projection = detail::gaussian(body, {v, d}, embed_std);
  }
  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    EncoderLayer layer;
    layer.ln_attn = detail::init_ln(d);
    layer.attn = detail::init_attention(body, d);
    layer.ln_ffn = detail::init_ln(d);
    layer.ffn = {detail::init_linear(body, d, config.ffn_dim), detail::init_linear(body, config.ffn_dim, d)};
    p.encoder.push_back(std::move(layer));
  }
  for (std::size_t l = 0; l < config.decoder_layers; ++l) {
    DecoderLayer layer;
    layer.ln_self = detail::init_ln(d);
    layer.self_attn = detail::init_attention(body, d);
    layer.ln_cross = detail::init_ln(d);
    layer.cross_attn = detail::init_attention(body, d);
    layer.ln_ffn = detail::init_ln(d);
    layer.ffn = {detail::init_linear(body, d, config.ffn_dim), detail::init_linear(body, config.ffn_dim, d)};
    p.decoder.push_back(std::move(layer));
  }
  p.encoder_final = detail::init_ln(d);
  p.decoder_final = detail::init_ln(d);
  p.adapters.resize(config.n_domains + 1);
  for (auto& bank : p.adapters)
    for (std::size_t s = 0; s < config.encoder_layers + config.decoder_layers; ++s)
      bank.push_back(detail::init_adapter(adapter_rng, d, config.bottleneck, config.adapter_init_std));
  p.positions = sinusoidal_positions(config.max_positions, d);
  return p;
}

// Sets every entry of adapter k to zero.
inline void zero_adapter(ModelParams& p, std::size_t k) {
  for (auto t : p.adapter_tensors(k))
    for (auto& v : t.mutable_values()) v = 0.0;
}

// Copies the values of adapter `from` into adapter `to`.
inline void copy_adapter(ModelParams& p, std::size_t from, std::size_t to) {
  auto src = p.adapter_tensors(from);
  auto dst = p.adapter_tensors(to);
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i].values();
    auto d = dst[i].mutable_values();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

}  // namespace mimt::model
