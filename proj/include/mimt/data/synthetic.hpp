// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mimt/data/corpus.hpp"
#include "mimt/numerics/rng.hpp"

namespace mimt::data {

// Generative description of a synthetic multi-domain corpus.
//
// Source tokens come in three kinds:
//   general   g<k>      -> G<k> in every domain
//   ambiguous a<k>      -> A<k>_<d>, active (sampled) only in `ambiguous_span`
//                          consecutive domains starting at k mod N
//   exclusive x<d>_<k>  -> X<d>_<k>, occurs only in domain d
// Each position draws an active ambiguous token with probability
// `mixing_rate`, otherwise a token uniformly from general + exclusive(d).
// The translation is deterministic given the domain, so MI(D;Y|X) is known.
struct SyntheticSpec {
  std::size_t n_domains = 3;
  std::vector<std::string> domain_names;
  std::size_t general_vocab = 24;
  std::size_t ambiguous_terms = 12;
  std::size_t ambiguous_span = 2;
  std::size_t exclusive_per_domain = 6;
  std::size_t min_length = 3;
  std::size_t max_length = 8;
  std::size_t train_per_domain = 1000;
  std::size_t dev_per_domain = 30;
  std::size_t test_per_domain = 100;
  double mixing_rate = 0.3;

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("synthetic spec: " + what); };
    if (n_domains < 1 || n_domains > 30) fail("n_domains must be in [1, 30]");
    if (!domain_names.empty() && domain_names.size() != n_domains) fail("domain_names must list n_domains names");
    if (std::set<std::string>(domain_names.begin(), domain_names.end()).size() != domain_names.size())
      fail("domain names must be unique");
    if (min_length < 1 || max_length > kMaxSentenceTokens || min_length > max_length)
      fail("length range must lie within [1, 250]");
    if (!(mixing_rate >= 0.0 && mixing_rate <= 1.0)) fail("mixing_rate must lie in [0, 1]");
    if (train_per_domain < 1) fail("train_per_domain must be positive");
    if (ambiguous_terms > 0) {
      if (n_domains < 2) fail("ambiguous terms need at least two domains");
      if (ambiguous_span < 2 || ambiguous_span > n_domains) fail("ambiguous_span must lie in [2, n_domains]");
      // Equal active counts per domain keep p(token | d) domain-independent.
      if (ambiguous_span < n_domains && ambiguous_terms % n_domains != 0)
        fail("ambiguous_terms must be a multiple of n_domains when ambiguous_span < n_domains");
    }
    if (general_vocab + exclusive_per_domain == 0 && (ambiguous_terms == 0 || mixing_rate < 1.0))
      fail("no tokens to sample from");
    if (ambiguous_terms == 0 && general_vocab + exclusive_per_domain == 0) fail("empty vocabulary");
  }

  std::string domain_name(std::size_t d) const {
    return domain_names.empty() ? "d" + std::to_string(d) : domain_names[d];
  }
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"n_domains", s.n_domains},
       {"domain_names", s.domain_names},
       {"general_vocab", s.general_vocab},
       {"ambiguous_terms", s.ambiguous_terms},
       {"ambiguous_span", s.ambiguous_span},
       {"exclusive_per_domain", s.exclusive_per_domain},
       {"min_length", s.min_length},
       {"max_length", s.max_length},
       {"train_per_domain", s.train_per_domain},
       {"dev_per_domain", s.dev_per_domain},
       {"test_per_domain", s.test_per_domain},
       {"mixing_rate", s.mixing_rate}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  SyntheticSpec d;
  s.n_domains = j.value("n_domains", d.n_domains);
  s.domain_names = j.value("domain_names", d.domain_names);
  s.general_vocab = j.value("general_vocab", d.general_vocab);
  s.ambiguous_terms = j.value("ambiguous_terms", d.ambiguous_terms);
  s.ambiguous_span = j.value("ambiguous_span", std::min(d.ambiguous_span, s.n_domains));
  s.exclusive_per_domain = j.value("exclusive_per_domain", d.exclusive_per_domain);
  s.min_length = j.value("min_length", d.min_length);
  s.max_length = j.value("max_length", d.max_length);
  s.train_per_domain = j.value("train_per_domain", d.train_per_domain);
  s.dev_per_domain = j.value("dev_per_domain", d.dev_per_domain);
  s.test_per_domain = j.value("test_per_domain", d.test_per_domain);
  s.mixing_rate = j.value("mixing_rate", d.mixing_rate);
}

enum class TermKind { General, Ambiguous, Exclusive, Unknown };

// Token inventory and translation rule of a SyntheticSpec.
class SyntheticLexicon {
 public:
  explicit SyntheticLexicon(SyntheticSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    const std::size_t n = spec_.n_domains;
    for (std::size_t k = 0; k < spec_.general_vocab; ++k) {
      general_.push_back("g" + std::to_string(k));
      add(general_.back(), TermKind::General, all_domains(), k);
    }
    active_.resize(n);
    for (std::size_t k = 0; k < spec_.ambiguous_terms; ++k) {
      ambiguous_.push_back("a" + std::to_string(k));
      std::uint64_t mask = 0;
      for (std::size_t s = 0; s < spec_.ambiguous_span; ++s) mask |= std::uint64_t{1} << ((k + s) % n);
      add(ambiguous_.back(), TermKind::Ambiguous, mask, k);
      for (std::size_t d = 0; d < n; ++d)
        if (mask >> d & 1) active_[d].push_back(ambiguous_.back());
    }
    exclusive_.resize(n);
    for (std::size_t d = 0; d < n; ++d)
      for (std::size_t k = 0; k < spec_.exclusive_per_domain; ++k) {
        exclusive_[d].push_back("x" + std::to_string(d) + "_" + std::to_string(k));
        add(exclusive_[d].back(), TermKind::Exclusive, std::uint64_t{1} << d, k);
      }
  }

  const SyntheticSpec& spec() const { return spec_; }
  std::size_t n_domains() const { return spec_.n_domains; }
  const std::vector<std::string>& general() const { return general_; }
  const std::vector<std::string>& ambiguous() const { return ambiguous_; }
  const std::vector<std::string>& exclusive(DomainId d) const { return exclusive_.at(d.index); }
  const std::vector<std::string>& active_ambiguous(DomainId d) const { return active_.at(d.index); }

  TermKind kind(const std::string& token) const {
    auto it = terms_.find(token);
    return it == terms_.end() ? TermKind::Unknown : it->second.kind;
  }
  // Bit d set iff the token can occur in domain d.
  std::uint64_t domains_of(const std::string& token) const {
    auto it = terms_.find(token);
    return it == terms_.end() ? 0 : it->second.domains;
  }

  std::string translate(DomainId d, const std::string& token) const {
    auto it = terms_.find(token);
    if (it == terms_.end()) throw DataError("synthetic lexicon: unknown source token '" + token + "'");
    const auto& t = it->second;
    if (!(t.domains >> d.index & 1))
      throw DataError("synthetic lexicon: token '" + token + "' does not occur in domain " + std::to_string(d.index));
    switch (t.kind) {
      case TermKind::General:
        return "G" + std::to_string(t.k);
      case TermKind::Ambiguous:
        return "A" + std::to_string(t.k) + "_" + std::to_string(d.index);
      case TermKind::Exclusive:
        return "X" + std::to_string(d.index) + "_" + std::to_string(t.k);
      case TermKind::Unknown:
        break;
    }
    throw DataError("synthetic lexicon: unknown token kind");
  }

  std::vector<std::string> translate(DomainId d, const std::vector<std::string>& source) const {
    std::vector<std::string> out;
    out.reserve(source.size());
    for (const auto& t : source) out.push_back(translate(d, t));
    return out;
  }

  // Probability that one position of a domain-d sentence is `token`.
  double token_probability(DomainId d, const std::string& token) const {
    auto it = terms_.find(token);
    if (it == terms_.end() || !(it->second.domains >> d.index & 1)) return 0.0;
    const double amb = ambiguous_rate(d);
    if (it->second.kind == TermKind::Ambiguous) return amb / static_cast<double>(active_[d.index].size());
    return (1.0 - amb) / static_cast<double>(general_.size() + exclusive_[d.index].size());
  }

  double ambiguous_rate(DomainId d) const {
    if (active_[d.index].empty()) return 0.0;
    if (general_.empty() && exclusive_[d.index].empty()) return 1.0;
    return spec_.mixing_rate;
  }

  // Exact H(Y | X = source) in nats under the generative model with a
  // uniform domain prior.
  double conditional_entropy(const std::vector<std::string>& source) const {
    std::vector<double> posterior(spec_.n_domains, 1.0);
    for (std::size_t d = 0; d < spec_.n_domains; ++d)
      for (const auto& t : source) posterior[d] *= token_probability(DomainId{d}, t);
    double z = 0.0;
    for (double p : posterior) z += p;
    if (z <= 0.0) throw DataError("synthetic lexicon: sentence is impossible under every domain");
    std::map<std::vector<std::string>, double> images;
    for (std::size_t d = 0; d < spec_.n_domains; ++d)
      if (posterior[d] > 0.0) images[translate(DomainId{d}, source)] += posterior[d] / z;
    double h = 0.0;
    for (const auto& [y, p] : images) h -= p * std::log(p);
    return h;
  }

  DomainSet domain_set() const {
    std::vector<std::string> names;
    for (std::size_t d = 0; d < spec_.n_domains; ++d) names.push_back(spec_.domain_name(d));
    return DomainSet(std::move(names));
  }

 private:
  struct Term {
    TermKind kind;
    std::uint64_t domains;
    std::size_t k;
  };
  std::uint64_t all_domains() const {
    return spec_.n_domains >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << spec_.n_domains) - 1;
  }
  void add(const std::string& token, TermKind kind, std::uint64_t domains, std::size_t k) {
    terms_.emplace(token, Term{kind, domains, k});
  }

  SyntheticSpec spec_;
  std::vector<std::string> general_;
  std::vector<std::string> ambiguous_;
  std::vector<std::vector<std::string>> exclusive_;
  std::vector<std::vector<std::string>> active_;
  std::unordered_map<std::string, Term> terms_;
};

// Exact MI(D;Y|X) in nats of the generative distribution, by dynamic
// programming over (set of domains consistent with the prefix, whether an
// ambiguous token has occurred). Per-domain token probabilities are equal for
// shared tokens, so the posterior is uniform over the consistent set and
// H(Y|X=x) = ln |consistent(x)| when x holds an ambiguous token, else 0.
inline double spec_mutual_information(const SyntheticSpec& spec) {
  const SyntheticLexicon lex(spec);
  const std::size_t n = spec.n_domains;
  const std::size_t lengths = spec.max_length - spec.min_length + 1;
  double mi = 0.0;
  for (std::size_t d = 0; d < n; ++d) {
    const DomainId dom{d};
    const double amb = lex.ambiguous_rate(dom);
    const double pool = static_cast<double>(lex.general().size() + lex.exclusive(dom).size());
    const double p_general = pool > 0 ? (1.0 - amb) * static_cast<double>(lex.general().size()) / pool : 0.0;
    const double p_exclusive = pool > 0 ? (1.0 - amb) * static_cast<double>(lex.exclusive(dom).size()) / pool : 0.0;
    std::map<std::uint64_t, double> amb_moves;  // consistent-domain mask -> probability
    for (const auto& t : lex.active_ambiguous(dom))
      amb_moves[lex.domains_of(t)] += amb / static_cast<double>(lex.active_ambiguous(dom).size());

    // state: (mask, seen_ambiguous) -> probability
    std::map<std::pair<std::uint64_t, bool>, double> states{{{(std::uint64_t{1} << n) - 1, false}, 1.0}};
    for (std::size_t len = 1; len <= spec.max_length; ++len) {
      std::map<std::pair<std::uint64_t, bool>, double> next;
      for (const auto& [state, p] : states) {
        const auto [mask, seen] = state;
        if (p_general > 0) next[{mask, seen}] += p * p_general;
        if (p_exclusive > 0) next[{mask & (std::uint64_t{1} << d), seen}] += p * p_exclusive;
        for (const auto& [m, pm] : amb_moves) next[{mask & m, true}] += p * pm;
      }
      states = std::move(next);
      if (len < spec.min_length) continue;
      for (const auto& [state, p] : states)
        if (state.second) mi += p * std::log(static_cast<double>(std::popcount(state.first))) /
                                (static_cast<double>(n) * static_cast<double>(lengths));
    }
  }
  return mi;
}

namespace detail {

inline std::vector<std::string> sample_sentence(const SyntheticLexicon& lex, DomainId d, numerics::Rng& rng) {
  const auto& spec = lex.spec();
  const std::size_t len = spec.min_length + rng.uniform_int(spec.max_length - spec.min_length + 1);
  const double amb = lex.ambiguous_rate(d);
  const auto& active = lex.active_ambiguous(d);
  const auto& general = lex.general();
  const auto& exclusive = lex.exclusive(d);
  std::vector<std::string> out;
  out.reserve(len);
  for (std::size_t i = 0; i < len; ++i) {
    if (!active.empty() && rng.uniform() < amb) {
      out.push_back(active[rng.uniform_int(active.size())]);
    } else {
      const std::size_t k = rng.uniform_int(general.size() + exclusive.size());
      out.push_back(k < general.size() ? general[k] : exclusive[k - general.size()]);
    }
  }
  return out;
}

// Number of distinct sentences domain d can produce, saturating at 1e18.
inline double sentence_diversity(const SyntheticLexicon& lex, DomainId d) {
  const auto& spec = lex.spec();
  const double amb = lex.ambiguous_rate(d);
  double symbols = 0.0;
  if (amb > 0.0) symbols += static_cast<double>(lex.active_ambiguous(d).size());
  if (amb < 1.0) symbols += static_cast<double>(lex.general().size() + lex.exclusive(d).size());
  double total = 0.0;
  for (std::size_t len = spec.min_length; len <= spec.max_length; ++len) {
    total += std::pow(symbols, static_cast<double>(len));
    if (total > 1e18) return 1e18;
  }
  return total;
}

}  // namespace detail

// Draws train/dev/test splits. Splits are disjoint in (domain, source);
// every ambiguous token appears in train in each domain where it is active.
inline Corpus generate_synthetic(const SyntheticSpec& spec, const numerics::Rng& rng) {
  const SyntheticLexicon lex(spec);
  Corpus corpus;
  corpus.domains = lex.domain_set();
  corpus.domains.lock();

  for (std::size_t d = 0; d < spec.n_domains; ++d) {
    const DomainId dom{d};
    const auto& active = lex.active_ambiguous(dom);
    if (spec.train_per_domain < active.size())
      throw DataError("synthetic spec: train_per_domain (" + std::to_string(spec.train_per_domain) +
                      ") cannot cover the " + std::to_string(active.size()) + " ambiguous terms of domain " +
                      spec.domain_name(d));
    const double needed = static_cast<double>(spec.dev_per_domain + spec.test_per_domain);
    const double diversity = detail::sentence_diversity(lex, dom);
    if (needed > 0 && diversity < needed + 1)
      throw DataError("synthetic spec: domain " + spec.domain_name(d) + " admits only " +
                      std::to_string(static_cast<long long>(diversity)) +
                      " distinct sentences, fewer than the disjoint dev/test examples requested");

    std::set<std::vector<std::string>> seen;
    numerics::Rng train_rng = rng.split(3 * d);
    for (std::size_t i = 0; i < spec.train_per_domain; ++i) {
      auto source = detail::sample_sentence(lex, dom, train_rng);
      if (i < active.size()) source[0] = active[i];
      seen.insert(source);
      corpus.train.push_back({dom, source, lex.translate(dom, source)});
    }

    auto fill = [&](TextSplit& split, std::size_t count, std::uint64_t stream) {
      numerics::Rng r = rng.split(stream);
      const std::size_t max_attempts = 1000 + 200 * count;
      std::size_t attempts = 0, made = 0;
      while (made < count) {
        if (++attempts > max_attempts)
          throw DataError("synthetic spec: could not draw " + std::to_string(count) +
                          " unseen sentences for domain " + spec.domain_name(d) + "; increase vocabulary or lengths");
        auto source = detail::sample_sentence(lex, dom, r);
        if (!seen.insert(source).second) continue;
        split.push_back({dom, source, lex.translate(dom, source)});
        ++made;
      }
    };
    fill(corpus.dev, spec.dev_per_domain, 3 * d + 1);
    fill(corpus.test, spec.test_per_domain, 3 * d + 2);
  }
  return corpus;
}

// Test sentences of fixed length whose ambiguous-term count cycles through
// 0..length, the remaining positions drawn from the general vocabulary. No
// exclusive terms occur, so domain keywords can only be ambiguous terms. The
// ambiguous terms of one sentence all share the same domain set, so adding
// more of them adds ambiguity without adding evidence about the domain.
inline TextSplit generate_ambiguity_ladder(const SyntheticSpec& spec, std::size_t per_domain, std::size_t length,
                                           const numerics::Rng& rng) {
  const SyntheticLexicon lex(spec);
  if (length < 1 || length > kMaxSentenceTokens) throw ConfigError("ladder length must lie within [1, 250]");
  if (spec.general_vocab == 0) throw ConfigError("ladder sentences need a general vocabulary");
  TextSplit out;
  for (std::size_t d = 0; d < spec.n_domains; ++d) {
    const DomainId dom{d};
    std::map<std::uint64_t, std::vector<std::string>> groups;
    for (const auto& t : lex.active_ambiguous(dom)) groups[lex.domains_of(t)].push_back(t);
    if (groups.empty()) throw ConfigError("domain " + spec.domain_name(d) + " has no ambiguous terms");
    std::vector<const std::vector<std::string>*> group_list;
    for (const auto& [mask, terms] : groups) group_list.push_back(&terms);
    numerics::Rng r = rng.split(d);
    for (std::size_t i = 0; i < per_domain; ++i) {
      const std::size_t k = i % (length + 1);
      const auto& group = *group_list[r.uniform_int(group_list.size())];
      std::vector<std::size_t> slots(length);
      for (std::size_t j = 0; j < length; ++j) slots[j] = j;
      r.shuffle(slots);
      std::vector<std::string> source(length);
      for (std::size_t j = 0; j < length; ++j)
        source[slots[j]] = j < k ? group[r.uniform_int(group.size())] : lex.general()[r.uniform_int(spec.general_vocab)];
      out.push_back({dom, source, lex.translate(dom, source)});
    }
  }
  return out;
}

// Summary statistics written next to generated corpora.
inline nlohmann::json synthetic_manifest(const SyntheticSpec& spec, const Corpus& corpus, std::uint64_t seed) {
  const SyntheticLexicon lex(spec);
  auto split_stats = [&](const TextSplit& split) {
    double h = 0.0;
    std::size_t with_amb = 0, tokens = 0, amb_tokens = 0;
    for (const auto& ex : split) {
      h += lex.conditional_entropy(ex.source);
      bool any = false;
      for (const auto& t : ex.source) {
        ++tokens;
        if (lex.kind(t) == TermKind::Ambiguous) {
          ++amb_tokens;
          any = true;
        }
      }
      with_amb += any;
    }
    const double n = split.empty() ? 1.0 : static_cast<double>(split.size());
    return nlohmann::json{{"examples", split.size()},
                          {"tokens", tokens},
                          {"ambiguous_tokens", amb_tokens},
                          {"sentences_with_ambiguous_terms", with_amb},
                          {"mean_conditional_entropy_nats", h / n},
                          {"hash", split_hash(split, corpus.domains)}};
  };
  return {{"seed", seed},
          {"spec", spec},
          {"domains", corpus.domains.names()},
          {"true_mi_nats", spec_mutual_information(spec)},
          {"splits", {{"train", split_stats(corpus.train)}, {"dev", split_stats(corpus.dev)}, {"test", split_stats(corpus.test)}}}};
}

}  // namespace mimt::data
