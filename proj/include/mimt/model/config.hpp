// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "json.hpp"
#include "mimt/error.hpp"

namespace mimt::model {

struct ModelConfig {
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t dim = 64;
  std::size_t ffn_dim = 128;
  std::size_t heads = 4;
  std::size_t bottleneck = 32;
  std::size_t n_domains = 1;
  double dropout = 0.1;
  std::size_t vocab_size = 0;
  std::size_t max_positions = 256;
  bool share_embeddings = true;
  double adapter_init_std = 1e-2;

  // 2+2 layers, dim 64: trainable on one CPU core.
  static ModelConfig desk() { return {}; }

  static ModelConfig base() {
    ModelConfig c;
    c.encoder_layers = 6;
    c.decoder_layers = 6;
    c.dim = 512;
    c.ffn_dim = 2048;
    c.heads = 8;
    c.bottleneck = 256;
    c.dropout = 0.1;
    return c;
  }

  static ModelConfig preset(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "base") return base();
    throw ConfigError("unknown model preset '" + name + "' (known: desk, base)");
  }

  void validate() const {
    if (encoder_layers == 0 || decoder_layers == 0) throw ConfigError("model needs at least one encoder and decoder layer");
    if (dim == 0 || heads == 0 || dim % heads != 0)
      throw ConfigError("embedding dim " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
    if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
    if (bottleneck == 0) throw ConfigError("adapter bottleneck must be at least 1");
    if (n_domains == 0) throw ConfigError("n_domains must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (vocab_size <= 4) throw ConfigError("vocab_size must exceed the 4 reserved ids");
    if (max_positions == 0) throw ConfigError("max_positions must be positive");
    if (!(adapter_init_std >= 0.0)) throw ConfigError("adapter_init_std must be nonnegative");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"encoder_layers", c.encoder_layers}, {"decoder_layers", c.decoder_layers},
       {"dim", c.dim},                       {"ffn_dim", c.ffn_dim},
       {"heads", c.heads},                   {"bottleneck", c.bottleneck},
       {"n_domains", c.n_domains},           {"dropout", c.dropout},
       {"vocab_size", c.vocab_size},         {"max_positions", c.max_positions},
       {"share_embeddings", c.share_embeddings}, {"adapter_init_std", c.adapter_init_std}};
}

// Missing keys fall back to the preset named by "preset" (default desk).
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  const ModelConfig d = ModelConfig::preset(j.value("preset", std::string("desk")));
  c.encoder_layers = j.value("encoder_layers", d.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", d.decoder_layers);
  c.dim = j.value("dim", d.dim);
  c.ffn_dim = j.value("ffn_dim", d.ffn_dim);
  c.heads = j.value("heads", d.heads);
  c.bottleneck = j.value("bottleneck", d.bottleneck);
  c.n_domains = j.value("n_domains", d.n_domains);
  c.dropout = j.value("dropout", d.dropout);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_positions = j.value("max_positions", d.max_positions);
  c.share_embeddings = j.value("share_embeddings", d.share_embeddings);
  c.adapter_init_std = j.value("adapter_init_std", d.adapter_init_std);
}

// Which adapter a forward pass routes through.
class AdapterSelector {
 public:
  enum class Kind { None, General, Domain };

  static AdapterSelector none() { return AdapterSelector(Kind::None, 0); }
  static AdapterSelector general() { return AdapterSelector(Kind::General, 0); }
  static AdapterSelector domain(std::size_t d) { return AdapterSelector(Kind::Domain, d); }

  Kind kind() const { return kind_; }
  std::size_t domain_index() const { return domain_; }
  bool operator==(const AdapterSelector&) const = default;

  std::string to_string() const {
    switch (kind_) {
      case Kind::None:
        return "none";
      case Kind::General:
        return "general";
      case Kind::Domain:
        return "domain(" + std::to_string(domain_) + ")";
    }
    return "?";
  }

 private:
  AdapterSelector(Kind k, std::size_t d) : kind_(k), domain_(d) {}
  Kind kind_;
  std::size_t domain_;
};

struct DecodeConfig {
  std::size_t beam = 5;
  std::size_t max_length = 64;
  double length_penalty = 1.0;

  void validate(std::size_t max_positions) const {
    if (beam < 1) throw ConfigError("beam must be at least 1");
    if (max_length < 1 || max_length > max_positions)
      throw ConfigError("max_length must lie in [1, " + std::to_string(max_positions) + "]");
  }
};

inline void to_json(nlohmann::json& j, const DecodeConfig& c) {
  j = {{"beam", c.beam}, {"max_length", c.max_length}, {"length_penalty", c.length_penalty}};
}
inline void from_json(const nlohmann::json& j, DecodeConfig& c) {
  DecodeConfig d;
  c.beam = j.value("beam", d.beam);
  c.max_length = j.value("max_length", d.max_length);
  c.length_penalty = j.value("length_penalty", d.length_penalty);
}

}  // namespace mimt::model
