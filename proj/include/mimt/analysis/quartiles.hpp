// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "json.hpp"
#include "mimt/analysis/keywords.hpp"
#include "mimt/analysis/metrics.hpp"

namespace mimt::analysis {

// Keyword occurrences in each source sentence, using its own domain's set.
inline std::vector<std::size_t> keyword_counts(const data::TextSplit& split, const KeywordIndex& keywords) {
  std::vector<std::set<std::string>> sets;
  for (std::size_t d = 0; d < keywords.per_domain.size(); ++d) sets.push_back(keywords.set(d));
  std::vector<std::size_t> out;
  out.reserve(split.size());
  for (const auto& ex : split) {
    if (ex.domain.index >= sets.size()) throw DataError("sentence from domain " + std::to_string(ex.domain.index) + " has no keyword set");
    std::size_t n = 0;
    for (const auto& t : ex.source) n += sets[ex.domain.index].count(t);
    out.push_back(n);
  }
  return out;
}

struct QuartileAssignment {
  // Count at ranks ceil(n/4), ceil(n/2), ceil(3n/4) of the ascending order.
  std::array<std::size_t, 3> thresholds{};
  std::array<std::vector<std::size_t>, 4> members;  // positions into the input
};

// A sentence goes to the first quartile whose threshold its count does not
// exceed, so sentences tied with a boundary stay in the lower quartile.
inline QuartileAssignment assign_quartiles(const std::vector<std::size_t>& counts) {
  QuartileAssignment a;
  if (counts.empty()) return a;
  std::vector<std::size_t> sorted(counts);
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = counts.size();
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t rank = (n * (k + 1) + 3) / 4;  // ceil(n (k+1) / 4), 1-based
    a.thresholds[k] = sorted[rank - 1];
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t q = 3;
    for (std::size_t k = 0; k < 3; ++k)
      if (counts[i] <= a.thresholds[k]) {
        q = k;
        break;
      }
    a.members[q].push_back(i);
  }
  return a;
}

struct QuartileBin {
  std::vector<std::size_t> sentences;  // indices into the test split
  double mean_keywords = 0.0;
  std::optional<double> bleu_a;
  std::optional<double> bleu_b;
  std::optional<double> delta;  // bleu_a - bleu_b
};

struct DomainQuartiles {
  std::size_t domain = 0;
  std::array<std::size_t, 3> thresholds{};
  std::array<QuartileBin, 4> bins;
  double bleu_a = 0.0;
  double bleu_b = 0.0;
  double delta = 0.0;
};

struct QuartileReport {
  std::vector<DomainQuartiles> domains;
  std::array<std::optional<double>, 4> mean_delta;  // over domains with a nonempty quartile
  double mean_domain_delta = 0.0;
};

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline void to_json(nlohmann::json& j, const QuartileReport& r) {
  j["domains"] = nlohmann::json::array();
  for (const auto& d : r.domains) {
    nlohmann::json dj = {{"domain", d.domain}, {"thresholds", d.thresholds}, {"bleu_a", d.bleu_a},
                         {"bleu_b", d.bleu_b}, {"delta", d.delta}};
    for (const auto& b : d.bins)
      dj["quartiles"].push_back({{"sentences", b.sentences.size()},
                                 {"mean_keywords", b.mean_keywords},
                                 {"bleu_a", optional_json(b.bleu_a)},
                                 {"bleu_b", optional_json(b.bleu_b)},
                                 {"delta", optional_json(b.delta)}});
    j["domains"].push_back(dj);
  }
  j["mean_delta"] = nlohmann::json::array();
  for (const auto& v : r.mean_delta) j["mean_delta"].push_back(optional_json(v));
  j["mean_domain_delta"] = r.mean_domain_delta;
}

// Per-domain keyword quartiles of the test set and BLEU of systems A and B
// in each quartile.
inline QuartileReport quartile_report(const data::TextSplit& test, const KeywordIndex& keywords,
                                      const std::vector<Sentence>& system_a, const std::vector<Sentence>& system_b) {
  if (system_a.size() != test.size() || system_b.size() != test.size())
    throw DataError("quartile_report: outputs (" + std::to_string(system_a.size()) + ", " +
                    std::to_string(system_b.size()) + ") do not match " + std::to_string(test.size()) + " test sentences");
  const auto counts = keyword_counts(test, keywords);
  std::map<std::size_t, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < test.size(); ++i) by_domain[test[i].domain.index].push_back(i);

  auto bleu_of = [&](const std::vector<std::size_t>& ids, const std::vector<Sentence>& sys) {
    std::vector<Sentence> hyps, refs;
    for (auto i : ids) {
      hyps.push_back(sys[i]);
      refs.push_back(test[i].target);
    }
    return corpus_bleu(hyps, refs).score;
  };

  QuartileReport report;
  std::array<double, 4> delta_sum{};
  std::array<std::size_t, 4> delta_n{};
  for (const auto& [domain, ids] : by_domain) {
    DomainQuartiles dq;
    dq.domain = domain;
    std::vector<std::size_t> local_counts;
    for (auto i : ids) local_counts.push_back(counts[i]);
    const auto a = assign_quartiles(local_counts);
    dq.thresholds = a.thresholds;
    for (std::size_t q = 0; q < 4; ++q) {
      auto& bin = dq.bins[q];
      double kw = 0.0;
      for (auto local : a.members[q]) {
        bin.sentences.push_back(ids[local]);
        kw += static_cast<double>(local_counts[local]);
      }
      if (bin.sentences.empty()) continue;
      bin.mean_keywords = kw / static_cast<double>(bin.sentences.size());
      bin.bleu_a = bleu_of(bin.sentences, system_a);
      bin.bleu_b = bleu_of(bin.sentences, system_b);
      bin.delta = *bin.bleu_a - *bin.bleu_b;
      delta_sum[q] += *bin.delta;
      ++delta_n[q];
    }
    dq.bleu_a = bleu_of(ids, system_a);
    dq.bleu_b = bleu_of(ids, system_b);
    dq.delta = dq.bleu_a - dq.bleu_b;
    report.mean_domain_delta += dq.delta;
    report.domains.push_back(std::move(dq));
  }
  report.mean_domain_delta /= static_cast<double>(report.domains.size());
  for (std::size_t q = 0; q < 4; ++q)
    if (delta_n[q]) report.mean_delta[q] = delta_sum[q] / static_cast<double>(delta_n[q]);
  return report;
}

}  // namespace mimt::analysis
