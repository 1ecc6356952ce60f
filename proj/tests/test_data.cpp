// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "mimt/data/batching.hpp"
#include "mimt/data/synthetic.hpp"

using namespace mimt;
using namespace mimt::data;
using mimt::numerics::Rng;

namespace {

LoadResult parse(const std::string& text, DomainSet& domains) {
  std::istringstream in(text);
  return parse_tsv(in, domains);
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_domains = 3;
  s.general_vocab = 10;
  s.ambiguous_terms = 6;
  s.ambiguous_span = 2;
  s.exclusive_per_domain = 4;
  s.min_length = 2;
  s.max_length = 6;
  s.train_per_domain = 60;
  s.dev_per_domain = 10;
  s.test_per_domain = 10;
  s.mixing_rate = 0.3;
  return s;
}

}  // namespace

TEST(LoadTsv, ParsesLine) {
  DomainSet domains;
  auto r = parse("it\thello world\thallo welt\n", domains);
  ASSERT_EQ(r.examples.size(), 1u);
  EXPECT_EQ(domains.name(r.examples[0].domain), "it");
  EXPECT_EQ(r.examples[0].source.size(), 2u);
  EXPECT_EQ(r.examples[0].target.size(), 2u);

  Vocab v = Vocab::build({&r.examples}, 100);
  auto enc = encode_example(v, r.examples[0], false);
  EXPECT_EQ(enc.target.size(), 3u);
  EXPECT_EQ(enc.target.back(), Vocab::kEos);
}

TEST(LoadTsv, DropsEmptyAndLong) {
  DomainSet domains;
  std::string long_side;
  for (int i = 0; i < 300; ++i) long_side += "w ";
  auto r = parse("it\thello\t\nit\t" + long_side + "\tx\nit\ta\tb\n", domains);
  EXPECT_EQ(r.examples.size(), 1u);
  EXPECT_EQ(r.dropped, 2u);
}

TEST(LoadTsv, MalformedLineReportsLineNumber) {
  DomainSet domains;
  try {
    parse("it\ta\tb\nit\tonly two\n", domains);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
}

TEST(LoadTsv, UnknownDomainAfterLock) {
  DomainSet domains;
  parse("it\ta\tb\n", domains);
  domains.lock();
  EXPECT_THROW(parse("law\ta\tb\n", domains), DataError);
}

TEST(LoadTsv, RatioFilterDropsExtremes) {
  DomainSet domains;
  std::string text;
  for (int i = 0; i < 40; ++i) {
    std::string src;
    for (int k = 0; k <= i % 10; ++k) src += "s ";
    text += "it\t" + src + "\tt t t\n";
  }
  std::istringstream in(text);
  LoadOptions opts;
  opts.filter_length_ratio = true;
  auto r = parse_tsv(in, domains, opts);
  EXPECT_EQ(r.examples.size(), 36u);
  EXPECT_EQ(r.dropped, 4u);
}

TEST(Vocab, FrequencyOrderAndReserved) {
  DomainSet domains;
  auto r = parse("d\ta a b\tb\n", domains);
  Vocab v = Vocab::build({&r.examples}, 6);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_EQ(v.token(0), "<pad>");
  EXPECT_EQ(v.token(3), "<unk>");
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("b"));
  EXPECT_EQ(v.id("c"), Vocab::kUnk);
}

TEST(Vocab, TieBreakLexicographic) {
  DomainSet domains;
  auto r = parse("d\tzeta alpha\tmid\n", domains);
  Vocab v = Vocab::build({&r.examples}, 5);
  EXPECT_TRUE(v.contains("alpha"));
  EXPECT_FALSE(v.contains("mid"));
  EXPECT_FALSE(v.contains("zeta"));
}

TEST(Vocab, TooSmallAndEmpty) {
  TextSplit empty;
  EXPECT_THROW(Vocab::build({&empty}, 10), DataError);
  DomainSet domains;
  auto r = parse("d\ta\tb\n", domains);
  EXPECT_THROW(Vocab::build({&r.examples}, 3), ConfigError);
  EXPECT_THROW(Vocab::build({&r.examples}, 4, &domains), ConfigError);
}

TEST(Vocab, DomainTagsAndRoundTrip) {
  DomainSet domains;
  auto r = parse("it\tx y\tX Y\nlaw\ty z\tY Z\n", domains);
  Vocab v = Vocab::build({&r.examples}, 100, &domains);
  EXPECT_TRUE(v.has_domain_tags());
  EXPECT_EQ(v.token(v.domain_tag(DomainId{1})), "<dom:law>");
  auto enc = encode_example(v, r.examples[1], true);
  EXPECT_EQ(enc.source.front(), v.domain_tag(DomainId{1}));
  EXPECT_EQ(v.decode(enc.target), r.examples[1].target);
  EXPECT_EQ(Vocab::from_json(v.to_json()), v);
  Vocab plain = Vocab::build({&r.examples}, 100);
  EXPECT_FALSE(plain.has_domain_tags());
  EXPECT_THROW(plain.domain_tag(DomainId{0}), ConfigError);
}

TEST(Synthetic, Deterministic) {
  auto a = generate_synthetic(small_spec(), Rng(5));
  auto b = generate_synthetic(small_spec(), Rng(5));
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.dev, b.dev);
  EXPECT_EQ(a.test, b.test);
  auto c = generate_synthetic(small_spec(), Rng(6));
  EXPECT_NE(a.train, c.train);
}

TEST(Synthetic, SplitsDisjoint) {
  auto corpus = generate_synthetic(small_spec(), Rng(1));
  std::set<TextExample> train(corpus.train.begin(), corpus.train.end());
  std::set<TextExample> dev(corpus.dev.begin(), corpus.dev.end());
  for (const auto& ex : corpus.dev) EXPECT_FALSE(train.count(ex));
  for (const auto& ex : corpus.test) {
    EXPECT_FALSE(train.count(ex));
    EXPECT_FALSE(dev.count(ex));
  }
}

TEST(Synthetic, AmbiguousTermsCoverAtLeastTwoDomains) {
  const auto spec = small_spec();
  SyntheticLexicon lex(spec);
  auto corpus = generate_synthetic(spec, Rng(2));
  std::map<std::string, std::set<std::size_t>> seen;
  for (const auto& ex : corpus.train)
    for (const auto& t : ex.source)
      if (lex.kind(t) == TermKind::Ambiguous) seen[t].insert(ex.domain.index);
  ASSERT_EQ(seen.size(), spec.ambiguous_terms);
  for (const auto& [t, doms] : seen) EXPECT_GE(doms.size(), 2u) << t;
}

TEST(Synthetic, TranslationsFollowGenerativeRule) {
  const auto spec = small_spec();
  SyntheticLexicon lex(spec);
  auto corpus = generate_synthetic(spec, Rng(3));
  std::map<std::pair<std::size_t, std::string>, std::set<std::string>> images;
  for (const auto& ex : corpus.train) {
    ASSERT_EQ(ex.source.size(), ex.target.size());
    for (std::size_t i = 0; i < ex.source.size(); ++i) images[{ex.domain.index, ex.source[i]}].insert(ex.target[i]);
  }
  for (const auto& [key, targets] : images) {
    EXPECT_EQ(targets.size(), 1u);
    EXPECT_EQ(*targets.begin(), lex.translate(DomainId{key.first}, key.second));
  }
  // An ambiguous token has a different image in each domain where it occurs.
  EXPECT_NE(lex.translate(DomainId{0}, "a0"), lex.translate(DomainId{1}, "a0"));
  EXPECT_THROW(lex.translate(DomainId{2}, "a0"), DataError);
}

TEST(Synthetic, SingleDomainHasZeroMi) {
  SyntheticSpec s;
  s.n_domains = 1;
  s.ambiguous_terms = 0;
  s.exclusive_per_domain = 2;
  s.general_vocab = 5;
  s.train_per_domain = 20;
  s.dev_per_domain = 2;
  s.test_per_domain = 2;
  EXPECT_EQ(spec_mutual_information(s), 0.0);
  SyntheticLexicon lex(s);
  auto corpus = generate_synthetic(s, Rng(0));
  for (const auto& ex : corpus.train) {
    EXPECT_EQ(ex.target, lex.translate(ex.domain, ex.source));
    EXPECT_EQ(lex.conditional_entropy(ex.source), 0.0);
  }
}

TEST(Synthetic, SingleAmbiguousTokenTwoDomainsIsLn2) {
  SyntheticSpec s;
  s.n_domains = 2;
  s.general_vocab = 0;
  s.ambiguous_terms = 1;
  s.ambiguous_span = 2;
  s.exclusive_per_domain = 0;
  s.min_length = 1;
  s.max_length = 1;
  s.train_per_domain = 1;
  s.dev_per_domain = 0;
  s.test_per_domain = 0;
  s.mixing_rate = 1.0;
  // Enumerate: x = "a0" always; y = A0_0 or A0_1 with probability 1/2 each and
  // p(y|x,d) = 1, so E[log p(y|x,d)/p(y|x)] = log 2.
  EXPECT_NEAR(spec_mutual_information(s), std::log(2.0), 1e-15);
  SyntheticLexicon lex(s);
  EXPECT_NEAR(lex.conditional_entropy({"a0"}), std::log(2.0), 1e-15);
}

TEST(Synthetic, DpMatchesSentenceEnumeration) {
  // Brute force over every sentence of a tiny spec, weighting each sentence's
  // H(Y|X=x) by its generative probability.
  SyntheticSpec s;
  s.n_domains = 3;
  s.general_vocab = 1;
  s.ambiguous_terms = 3;
  s.ambiguous_span = 2;
  s.exclusive_per_domain = 1;
  s.min_length = 1;
  s.max_length = 3;
  s.train_per_domain = 3;
  s.dev_per_domain = 0;
  s.test_per_domain = 0;
  s.mixing_rate = 0.4;
  SyntheticLexicon lex(s);
  std::vector<std::string> alphabet = {"g0", "a0", "a1", "a2", "x0_0", "x1_0", "x2_0"};
  double mi = 0.0;
  std::vector<std::string> sentence;
  std::function<void(std::size_t)> walk = [&](std::size_t len) {
    if (sentence.size() == len) {
      double px = 0.0;
      for (std::size_t d = 0; d < 3; ++d) {
        double p = 1.0 / 3.0 / 3.0;  // domain prior, length prior
        for (const auto& t : sentence) p *= lex.token_probability(DomainId{d}, t);
        px += p;
      }
      if (px > 0) mi += px * lex.conditional_entropy(sentence);
      return;
    }
    for (const auto& t : alphabet) {
      sentence.push_back(t);
      walk(len);
      sentence.pop_back();
    }
  };
  for (std::size_t len = 1; len <= 3; ++len) walk(len);
  EXPECT_NEAR(spec_mutual_information(s), mi, 1e-12);
  EXPECT_GT(mi, 0.0);
}

TEST(Synthetic, InvalidSpecs) {
  auto s = small_spec();
  s.mixing_rate = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.max_length = 300;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.ambiguous_terms = 5;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.general_vocab = 1;
  s.exclusive_per_domain = 0;
  s.ambiguous_terms = 3;
  s.max_length = 2;
  s.min_length = 1;
  s.mixing_rate = 0.5;
  s.dev_per_domain = 50;
  EXPECT_THROW(generate_synthetic(s, Rng(0)), DataError);
}

TEST(Synthetic, SpecJsonRoundTrip) {
  auto s = small_spec();
  s.domain_names = {"it", "law", "med"};
  nlohmann::json j = s;
  SyntheticSpec back = j.get<SyntheticSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
  auto corpus = generate_synthetic(s, Rng(0));
  EXPECT_EQ(corpus.domains.name(DomainId{2}), "med");
  auto manifest = synthetic_manifest(s, corpus, 0);
  EXPECT_GT(manifest["true_mi_nats"].get<double>(), 0.0);
}

TEST(Synthetic, LadderTermsShareOneDomainSet) {
  SyntheticSpec s;
  const SyntheticLexicon lex(s);
  const auto ladder = generate_ambiguity_ladder(s, 28, 6, Rng(3));
  ASSERT_EQ(ladder.size(), 28u * s.n_domains);
  std::set<std::uint64_t> masks_seen;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    const auto& ex = ladder[i];
    ASSERT_EQ(ex.source.size(), 6u);
    std::set<std::uint64_t> masks;
    std::size_t ambiguous = 0;
    for (const auto& t : ex.source) {
      ASSERT_NE(lex.kind(t), TermKind::Exclusive);
      if (lex.kind(t) != TermKind::Ambiguous) continue;
      ++ambiguous;
      masks.insert(lex.domains_of(t));
      EXPECT_TRUE(lex.domains_of(t) >> ex.domain.index & 1);
    }
    EXPECT_EQ(ambiguous, i % 28 % 7);
    EXPECT_LE(masks.size(), 1u);
    masks_seen.insert(masks.begin(), masks.end());
    EXPECT_EQ(ex.target, lex.translate(ex.domain, ex.source));
  }
  EXPECT_EQ(masks_seen.size(), 3u);
  EXPECT_THROW(generate_ambiguity_ladder(s, 5, 0, Rng(3)), ConfigError);
}

namespace {

std::vector<ParallelExample> random_examples(std::size_t n, std::size_t domains, Rng& rng) {
  std::vector<ParallelExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    ParallelExample ex;
    ex.domain = DomainId{rng.uniform_int(domains)};
    ex.index = i;
    const auto sl = 1 + rng.uniform_int(12), tl = 1 + rng.uniform_int(12);
    for (std::size_t k = 0; k < sl; ++k) ex.source.push_back(4 + static_cast<int>(rng.uniform_int(20)));
    for (std::size_t k = 0; k + 1 < tl; ++k) ex.target.push_back(4 + static_cast<int>(rng.uniform_int(20)));
    ex.target.push_back(Vocab::kEos);
    out.push_back(ex);
  }
  return out;
}

// Independent packer: walk the order, close a group when adding the next
// example would push rows * max length past the budget.
std::vector<std::vector<std::size_t>> oracle_pack(const std::vector<std::size_t>& lengths,
                                                  const std::vector<std::size_t>& ids, std::size_t budget) {
  std::vector<std::vector<std::size_t>> groups(1);
  for (auto id : ids) {
    auto trial = groups.back();
    trial.push_back(id);
    std::size_t longest = 0;
    for (auto t : trial) longest = std::max(longest, lengths[t]);
    if (!groups.back().empty() && trial.size() * longest > budget) groups.emplace_back();
    groups.back().push_back(id);
  }
  return groups;
}

}  // namespace

TEST(Batching, SingleDomainBatches) {
  std::vector<ParallelExample> ex(2);
  ex[0] = {DomainId{0}, {5}, {6, Vocab::kEos}, 0};
  ex[1] = {DomainId{1}, {5}, {6, Vocab::kEos}, 1};
  Rng rng(0);
  EXPECT_EQ(make_batches(ex, 1000, rng).size(), 2u);
}

TEST(Batching, BudgetEqualToExample) {
  std::vector<ParallelExample> ex;
  for (std::size_t i = 0; i < 4; ++i) ex.push_back({DomainId{0}, {5, 5}, {6, 6, Vocab::kEos}, i});
  Rng rng(0);
  auto batches = make_batches(ex, 3, rng);
  EXPECT_EQ(batches.size(), 4u);
  for (const auto& b : batches) EXPECT_EQ(b.rows, 1u);
  ex.push_back({DomainId{0}, {5}, {6, 6, 6, Vocab::kEos}, 9});
  try {
    make_batches(ex, 3, rng);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("example 9"), std::string::npos);
  }
}

TEST(Batching, MatchesGreedyOracle) {
  Rng gen(11);
  auto examples = random_examples(100, 3, gen);
  Rng rng(42);
  auto batches = make_batches(examples, 64, rng);

  // Replay the shuffle with an identically seeded stream.
  Rng replay(42);
  std::vector<std::size_t> lengths;
  for (const auto& e : examples) lengths.push_back(e.target.size());
  std::vector<std::vector<std::size_t>> expected;
  std::map<std::size_t, std::vector<std::vector<std::size_t>>> per_domain;
  for (std::size_t d = 0; d < 3; ++d) {
    std::vector<std::size_t> ids;
    for (const auto& e : examples)
      if (e.domain.index == d) ids.push_back(e.index);
    replay.shuffle(ids);
    per_domain[d] = oracle_pack(lengths, ids, 64);
  }
  std::vector<std::vector<std::size_t>> got;
  std::map<std::size_t, std::vector<std::vector<std::size_t>>> got_per_domain;
  for (const auto& b : batches) {
    EXPECT_LE(b.padded_target_tokens(), 64u);
    got_per_domain[b.domain.index].push_back(b.example_index);
  }
  EXPECT_EQ(got_per_domain, per_domain);
}

TEST(Batching, EpochCoversSplitExactlyOnce) {
  Rng gen(3);
  auto examples = random_examples(57, 2, gen);
  Rng rng(9);
  auto batches = make_batches(examples, 40, rng);
  std::vector<std::size_t> seen;
  for (const auto& b : batches) {
    for (std::size_t r = 0; r < b.rows; ++r) {
      EXPECT_EQ(b.row_domains[r], b.domain);
      const auto& ex = examples[b.example_index[r]];
      for (std::size_t i = 0; i < b.source_len; ++i)
        EXPECT_EQ(b.source_mask[r * b.source_len + i], i < ex.source.size());
      for (std::size_t i = 0; i < ex.target.size(); ++i) {
        EXPECT_EQ(b.target[r * b.target_len + i], ex.target[i]);
        EXPECT_EQ(b.decoder_input[r * b.target_len + i], i == 0 ? Vocab::kBos : ex.target[i - 1]);
      }
    }
    seen.insert(seen.end(), b.example_index.begin(), b.example_index.end());
  }
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> all(examples.size());
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(seen, all);

  Rng again(9);
  auto repeat = make_batches(examples, 40, again);
  ASSERT_EQ(repeat.size(), batches.size());
  for (std::size_t i = 0; i < batches.size(); ++i) EXPECT_EQ(repeat[i].example_index, batches[i].example_index);
}
