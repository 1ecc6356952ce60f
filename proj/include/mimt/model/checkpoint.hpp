// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mimt/model/params.hpp"

namespace mimt::model {

// On-disk layout:
//   "MIMTCKPT" | u32 version | u64 header bytes | JSON header | f64 blobs
// The header lists every tensor as {name, shape, offset, count}, offsets in
// doubles from the start of the blob section, plus free-form metadata.
struct CheckpointFile {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, std::pair<numerics::Shape, std::vector<double>>>> tensors;

  void add(const std::string& name, const numerics::Shape& shape, std::span<const double> values) {
    tensors.push_back({name, {shape, std::vector<double>(values.begin(), values.end())}});
  }
  void add(const std::string& name, const Tensor& t) { add(name, t.shape(), t.values()); }

  const std::pair<numerics::Shape, std::vector<double>>& get(const std::string& name) const {
    for (const auto& [n, entry] : tensors)
      if (n == name) return entry;
    throw DataError("checkpoint has no tensor '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& entry : tensors)
      if (entry.first == name) return true;
    return false;
  }
};

inline constexpr char kCheckpointMagic[8] = {'M', 'I', 'M', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_checkpoint(const std::string& path, const CheckpointFile& ckpt) {
  nlohmann::json header;
  header["meta"] = ckpt.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, entry] : ckpt.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", entry.first}, {"offset", offset}, {"count", entry.second.size()}});
    offset += entry.second.size();
  }
  const std::string text = header.dump();
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof(kCheckpointVersion));
    const std::uint64_t size = text.size();
    out.write(reinterpret_cast<const char*>(&size), sizeof(size));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, entry] : ckpt.tensors)
      out.write(reinterpret_cast<const char*>(entry.second.data()),
                static_cast<std::streamsize>(entry.second.size() * sizeof(double)));
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline CheckpointFile read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&size), sizeof(size));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError("'" + path + "' is not a checkpoint");
  if (version != kCheckpointVersion)
    throw DataError("checkpoint '" + path + "' has unsupported version " + std::to_string(version));
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  if (!in) throw DataError("truncated checkpoint header in '" + path + "'");
  auto header = nlohmann::json::parse(text);

  CheckpointFile ckpt;
  ckpt.meta = header.at("meta");
  std::vector<double> blob;
  std::uint64_t total = 0;
  for (const auto& t : header.at("tensors")) total += t.at("count").get<std::uint64_t>();
  blob.resize(total);
  in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(total * sizeof(double)));
  if (!in) throw DataError("truncated checkpoint data in '" + path + "'");
  for (const auto& t : header.at("tensors")) {
    const auto offset = t.at("offset").get<std::uint64_t>();
    const auto count = t.at("count").get<std::uint64_t>();
    auto shape = t.at("shape").get<numerics::Shape>();
    if (numerics::shape_size(shape) != count || offset + count > total)
      throw DataError("corrupt tensor entry '" + t.at("name").get<std::string>() + "' in '" + path + "'");
    ckpt.tensors.push_back({t.at("name").get<std::string>(),
                            {shape, std::vector<double>(blob.begin() + static_cast<long>(offset),
                                                        blob.begin() + static_cast<long>(offset + count))}});
  }
  return ckpt;
}

// Adds every model tensor under "param.<name>".
inline void store_params(CheckpointFile& ckpt, const ModelParams& p, const std::string& prefix = "param.") {
  for (const auto& [name, t] : p.named()) ckpt.add(prefix + name, t);
}

// Builds a model with the structure of `config` and values from the file.
inline ModelParams load_params(const CheckpointFile& ckpt, const ModelConfig& config,
                               const std::string& prefix = "param.") {
  ModelParams p = init_model(config, Rng(0));
  for (auto& [name, t] : p.named()) {
    const auto& [shape, values] = ckpt.get(prefix + name);
    if (shape != t.shape())
      throw DataError("checkpoint tensor '" + name + "' has shape " + shape_to_string(shape) + ", model expects " +
                      shape_to_string(t.shape()));
    auto dst = t.mutable_values();
    std::copy(values.begin(), values.end(), dst.begin());
  }
  return p;
}

}  // namespace mimt::model
