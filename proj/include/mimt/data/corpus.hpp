// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mimt/error.hpp"

namespace mimt::data {

// Upper bound on tokens per side; longer pairs are filtered on ingestion.
inline constexpr std::size_t kMaxSentenceTokens = 250;

struct DomainId {
  std::size_t index = 0;
  auto operator<=>(const DomainId&) const = default;
};

// Dense registry of domain names. Once locked (after the training split is
// read) unknown names are rejected.
class DomainSet {
 public:
  DomainSet() = default;
  explicit DomainSet(std::vector<std::string> names) : names_(std::move(names)) {}

  DomainId intern(const std::string& name) {
    if (auto id = find(name)) return *id;
    if (locked_) throw DataError("unknown domain '" + name + "' (known: " + joined() + ")");
    names_.push_back(name);
    return DomainId{names_.size() - 1};
  }
  std::optional<DomainId> find(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return DomainId{static_cast<std::size_t>(it - names_.begin())};
  }
  DomainId at(const std::string& name) const {
    if (auto id = find(name)) return *id;
    throw DataError("unknown domain '" + name + "' (known: " + joined() + ")");
  }
  const std::string& name(DomainId id) const { return names_.at(id.index); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  void lock() { locked_ = true; }
  bool locked() const { return locked_; }

  std::string joined() const {
    std::string out;
    for (const auto& n : names_) out += (out.empty() ? "" : ", ") + n;
    return out;
  }

 private:
  std::vector<std::string> names_;
  bool locked_ = false;
};

// A tokenized sentence pair before vocabulary lookup. The target does not
// carry EOS; encoding appends it.
struct TextExample {
  DomainId domain;
  std::vector<std::string> source;
  std::vector<std::string> target;

  bool operator==(const TextExample&) const = default;
  auto operator<=>(const TextExample&) const = default;
};

using TextSplit = std::vector<TextExample>;

struct Corpus {
  DomainSet domains;
  TextSplit train;
  TextSplit dev;
  TextSplit test;
};

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\r') ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

inline bool valid_utf8(std::string_view s) {
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    if (c < 0x80)
      extra = 0;
    else if ((c >> 5) == 0x6)
      extra = 1;
    else if ((c >> 4) == 0xE)
      extra = 2;
    else if ((c >> 3) == 0x1E)
      extra = 3;
    else
      return false;
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k)
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) return false;
    i += extra + 1;
  }
  return true;
}

struct LoadOptions {
  std::size_t max_tokens = kMaxSentenceTokens;
  // Drop the top and bottom 5% of source/target length ratios per domain.
  bool filter_length_ratio = false;
};

struct LoadResult {
  TextSplit examples;
  std::size_t dropped = 0;
};

inline LoadResult parse_tsv(std::istream& in, DomainSet& domains, const LoadOptions& options = {},
                            const std::string& origin = "<stream>") {
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!valid_utf8(line)) throw DataError(origin + ":" + std::to_string(line_no) + ": invalid UTF-8");
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3)
      throw DataError(origin + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                      std::to_string(fields.size()));
    TextExample ex;
    auto domain_name = split_whitespace(fields[0]);
    if (domain_name.size() != 1)
      throw DataError(origin + ":" + std::to_string(line_no) + ": malformed domain field");
    ex.source = split_whitespace(fields[1]);
    ex.target = split_whitespace(fields[2]);
    if (ex.source.empty() || ex.target.empty() || ex.source.size() > options.max_tokens ||
        ex.target.size() > options.max_tokens) {
      ++result.dropped;
      continue;
    }
    ex.domain = domains.intern(domain_name[0]);
    result.examples.push_back(std::move(ex));
  }

  if (options.filter_length_ratio) {
    std::map<std::size_t, std::vector<std::pair<double, std::size_t>>> ratios;
    for (std::size_t i = 0; i < result.examples.size(); ++i) {
      const auto& ex = result.examples[i];
      ratios[ex.domain.index].emplace_back(
          static_cast<double>(ex.source.size()) / static_cast<double>(ex.target.size()), i);
    }
    std::vector<bool> keep(result.examples.size(), true);
    for (auto& [domain, list] : ratios) {
      std::stable_sort(list.begin(), list.end());
      const std::size_t cut = list.size() / 20;
      for (std::size_t k = 0; k < cut; ++k) {
        keep[list[k].second] = false;
        keep[list[list.size() - 1 - k].second] = false;
      }
    }
    TextSplit kept;
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i])
        kept.push_back(std::move(result.examples[i]));
      else
        ++result.dropped;
    result.examples = std::move(kept);
  }
  return result;
}

inline LoadResult load_tsv(const std::string& path, DomainSet& domains, const LoadOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  return parse_tsv(in, domains, options, path);
}

inline void write_tsv(std::ostream& out, const TextSplit& split, const DomainSet& domains) {
  for (const auto& ex : split)
    out << domains.name(ex.domain) << '\t' << join_tokens(ex.source) << '\t' << join_tokens(ex.target) << '\n';
}

inline void write_tsv(const std::string& path, const TextSplit& split, const DomainSet& domains) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_tsv(out, split, domains);
}

// Loads train/dev/test; the domain registry is locked after the train split.
inline Corpus load_corpus(const std::string& train, const std::string& dev, const std::string& test,
                          const LoadOptions& options = {}) {
  Corpus corpus;
  corpus.train = load_tsv(train, corpus.domains, options).examples;
  corpus.domains.lock();
  LoadOptions eval_options = options;
  eval_options.filter_length_ratio = false;
  corpus.dev = load_tsv(dev, corpus.domains, eval_options).examples;
  corpus.test = load_tsv(test, corpus.domains, eval_options).examples;
  if (corpus.train.empty()) throw DataError("training split '" + train + "' has no usable examples");
  return corpus;
}

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Content hash of a split, used to check that runs share a test set.
inline std::string split_hash(const TextSplit& split, const DomainSet& domains) {
  std::ostringstream os;
  write_tsv(os, split, domains);
  std::ostringstream hex;
  hex << std::hex << fnv1a(os.str());
  return hex.str();
}

}  // namespace mimt::data
