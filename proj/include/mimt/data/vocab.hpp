// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mimt/data/corpus.hpp"

namespace mimt::data {

// Joint source/target vocabulary. Ids 0..3 are reserved; optional domain tag
// tokens follow them.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocab() : tokens_{"<pad>", "<s>", "</s>", "<unk>"} { reindex(); }

  static std::string tag_token(const std::string& domain_name) { return "<dom:" + domain_name + ">"; }

  // Keeps the most frequent tokens of all source and target sides, ties
  // broken lexicographically, up to max_size entries in total.
  static Vocab build(const std::vector<const TextSplit*>& splits, std::size_t max_size,
                     const DomainSet* tag_domains = nullptr) {
    const std::size_t tags = tag_domains ? tag_domains->size() : 0;
    if (max_size < kReserved + tags)
      throw ConfigError("vocabulary size " + std::to_string(max_size) + " is below the " +
                        std::to_string(kReserved + tags) + " reserved entries");
    std::size_t total_examples = 0;
    std::map<std::string, std::size_t> counts;
    for (const auto* split : splits)
      for (const auto& ex : *split) {
        ++total_examples;
        for (const auto& t : ex.source) ++counts[t];
        for (const auto& t : ex.target) ++counts[t];
      }
    if (total_examples == 0) throw DataError("cannot build a vocabulary from an empty corpus");

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });

    Vocab v;
    if (tag_domains)
      for (const auto& name : tag_domains->names()) v.tokens_.push_back(tag_token(name));
    v.tag_count_ = tags;
    for (const auto& [token, count] : ranked) {
      if (v.tokens_.size() >= max_size) break;
      v.tokens_.push_back(token);
    }
    v.reindex();
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool has_domain_tags() const { return tag_count_ > 0; }
  std::size_t domain_tag_count() const { return tag_count_; }
  int domain_tag(DomainId domain) const {
    if (domain.index >= tag_count_) throw ConfigError("vocabulary has no tag for domain " + std::to_string(domain.index));
    return static_cast<int>(kReserved + domain.index);
  }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  // Drops PAD/BOS/EOS and anything after the first EOS.
  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    for (int i : ids) {
      if (i == kEos) break;
      if (i == kPad || i == kBos) continue;
      out.push_back(token(i));
    }
    return out;
  }

  nlohmann::json to_json() const { return {{"tokens", tokens_}, {"domain_tags", tag_count_}}; }
  static Vocab from_json(const nlohmann::json& j) {
    Vocab v;
    v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
    v.tag_count_ = j.at("domain_tags").get<std::size_t>();
    if (v.tokens_.size() < kReserved) throw DataError("vocabulary is missing reserved entries");
    v.reindex();
    return v;
  }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_ && tag_count_ == other.tag_count_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
  }

  std::vector<std::string> tokens_;
  std::size_t tag_count_ = 0;
  std::unordered_map<std::string, int> index_;
};

// A sentence pair in vocabulary ids. The target ends with EOS.
struct ParallelExample {
  DomainId domain;
  std::vector<int> source;
  std::vector<int> target;
  std::size_t index = 0;  // position within its split
};

inline ParallelExample encode_example(const Vocab& vocab, const TextExample& ex, bool prepend_domain_tag,
                                      std::size_t index = 0) {
  ParallelExample out;
  out.domain = ex.domain;
  out.index = index;
  if (prepend_domain_tag) out.source.push_back(vocab.domain_tag(ex.domain));
  for (int id : vocab.encode(ex.source)) out.source.push_back(id);
  out.target = vocab.encode(ex.target);
  out.target.push_back(Vocab::kEos);
  return out;
}

inline std::vector<ParallelExample> encode_split(const Vocab& vocab, const TextSplit& split,
                                                 bool prepend_domain_tag) {
  std::vector<ParallelExample> out;
  out.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) out.push_back(encode_example(vocab, split[i], prepend_domain_tag, i));
  return out;
}

}  // namespace mimt::data
