// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mimt/data/corpus.hpp"

namespace mimt::analysis {

struct Keyword {
  std::string token;
  double score = 0.0;
};

struct KeywordIndex {
  std::vector<std::vector<Keyword>> per_domain;  // score-descending

  bool contains(std::size_t domain, const std::string& token) const {
    for (const auto& k : per_domain.at(domain))
      if (k.token == token) return true;
    return false;
  }
  std::set<std::string> set(std::size_t domain) const {
    std::set<std::string> out;
    for (const auto& k : per_domain.at(domain)) out.insert(k.token);
    return out;
  }
};

inline void to_json(nlohmann::json& j, const KeywordIndex& idx) {
  j = nlohmann::json::array();
  for (const auto& domain : idx.per_domain) {
    nlohmann::json d = nlohmann::json::array();
    for (const auto& k : domain) d.push_back({{"token", k.token}, {"score", k.score}});
    j.push_back(d);
  }
}

struct KeywordOptions {
  double top_fraction = 0.01;
  std::set<std::string> stoplist;
  bool raw_tf = false;  // count(w, d) instead of count(w, d) / tokens(d)
};

// TF-IDF over source sides with one document per domain. Each domain keeps
// its top ceil(fraction * distinct non-stoplist tokens) by score, ties broken
// lexicographically; tokens with zero score (present in every domain) are
// never kept, so a set can come out smaller.
inline KeywordIndex extract_tfidf_keywords(const data::TextSplit& train, std::size_t n_domains,
                                           const KeywordOptions& options = {}) {
  if (n_domains < 2) throw ConfigError("TF-IDF keywords need at least two domains");
  if (!(options.top_fraction > 0.0 && options.top_fraction <= 1.0)) throw ConfigError("top_fraction must lie in (0, 1]");
  std::vector<std::map<std::string, std::size_t>> counts(n_domains);
  std::vector<std::size_t> lengths(n_domains, 0);
  for (const auto& ex : train) {
    if (ex.domain.index >= n_domains) throw DataError("example domain " + std::to_string(ex.domain.index) + " out of range");
    for (const auto& t : ex.source) {
      if (options.stoplist.count(t)) continue;
      ++counts[ex.domain.index][t];
      ++lengths[ex.domain.index];
    }
  }
  std::map<std::string, std::size_t> df;
  for (std::size_t d = 0; d < n_domains; ++d) {
    if (counts[d].empty()) throw DataError("domain " + std::to_string(d) + " has no source tokens");
    for (const auto& [t, c] : counts[d]) ++df[t];
  }

  KeywordIndex idx;
  idx.per_domain.resize(n_domains);
  const double n = static_cast<double>(n_domains);
  for (std::size_t d = 0; d < n_domains; ++d) {
    std::vector<Keyword> scored;
    for (const auto& [t, c] : counts[d]) {
      const double tf = options.raw_tf ? static_cast<double>(c) : static_cast<double>(c) / static_cast<double>(lengths[d]);
      scored.push_back({t, tf * std::log(n / static_cast<double>(df[t]))});
    }
    std::sort(scored.begin(), scored.end(), [](const Keyword& a, const Keyword& b) {
      return a.score != b.score ? a.score > b.score : a.token < b.token;
    });
    const auto keep = static_cast<std::size_t>(std::ceil(options.top_fraction * static_cast<double>(scored.size()) - 1e-9));
    for (std::size_t i = 0; i < keep && i < scored.size() && scored[i].score > 0.0; ++i)
      idx.per_domain[d].push_back(scored[i]);
  }
  return idx;
}

inline std::set<std::string> load_stoplist(std::istream& in) {
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line))
    for (auto& t : data::split_whitespace(line)) out.insert(t);
  return out;
}

}  // namespace mimt::analysis
