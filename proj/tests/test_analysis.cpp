// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "mimt/analysis.hpp"
#include "oracles.hpp"

using namespace mimt;
using namespace mimt::analysis;
using mimt::numerics::Rng;

namespace {

std::vector<Sentence> random_corpus(Rng& rng, std::size_t sentences, std::size_t vocab, std::size_t max_len) {
  std::vector<Sentence> out(sentences);
  for (auto& s : out) {
    const auto len = rng.uniform_int(max_len + 1);
    for (std::size_t i = 0; i < len; ++i) s.push_back("w" + std::to_string(rng.uniform_int(vocab)));
  }
  return out;
}

data::TextSplit random_domain_text(Rng& rng, std::size_t domains, std::size_t per_domain, std::size_t vocab) {
  data::TextSplit out;
  for (std::size_t d = 0; d < domains; ++d)
    for (std::size_t i = 0; i < per_domain; ++i) {
      data::TextExample ex;
      ex.domain = data::DomainId{d};
      const auto len = 1 + rng.uniform_int(8);
      // Low ids are shared, high ids lean towards one domain.
      for (std::size_t k = 0; k < len; ++k) {
        const auto id = rng.uniform() < 0.5 ? rng.uniform_int(vocab / 4) : vocab / 4 + d * vocab + rng.uniform_int(vocab);
        ex.source.push_back("t" + std::to_string(id));
      }
      ex.target = ex.source;
      out.push_back(ex);
    }
  return out;
}

}  // namespace

TEST(Bleu, MatchesBruteForceOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = 1 + rng.uniform_int(10);
    const auto vocab = 2 + rng.uniform_int(19);
    auto hyps = random_corpus(rng, n, vocab, 12);
    auto refs = random_corpus(rng, n, vocab, 12);
    const auto got = corpus_bleu(hyps, refs).score;
    EXPECT_NEAR(got, oracles::bleu(hyps, refs), 1e-6) << "trial " << trial;
  }
}

TEST(Bleu, ClippedUnigramExample) {
  const auto r = corpus_bleu({{"the", "the", "the", "cat"}}, {{"the", "cat", "sat", "on"}});
  EXPECT_EQ(r.matches[0], 2u);
  EXPECT_EQ(r.totals[0], 4u);
  EXPECT_DOUBLE_EQ(r.precisions[0], 0.5);
}

TEST(Bleu, IdentityAndZeroOverlap) {
  const std::vector<Sentence> refs{{"a", "b", "c", "d"}, {"e", "f", "g", "h", "i"}};
  EXPECT_EQ(corpus_bleu(refs, refs).score, 100.0);
  EXPECT_EQ(corpus_bleu({{"x", "y", "z", "w"}, {"q", "r", "s", "t"}}, refs).score, 0.0);
  EXPECT_EQ(corpus_bleu({{}, {}}, refs).score, 0.0);
}

TEST(Bleu, BrevityPenalty) {
  const auto r = corpus_bleu({{"a", "b", "c", "d"}}, {{"a", "b", "c", "d", "e", "f", "g", "h"}});
  EXPECT_NEAR(r.brevity_penalty, std::exp(1.0 - 2.0), 1e-15);
  EXPECT_NEAR(r.score, 100.0 * std::exp(-1.0), 1e-12);
}

TEST(Bleu, SentenceOrderDoesNotMatter) {
  Rng rng(5);
  auto hyps = random_corpus(rng, 8, 6, 10);
  auto refs = random_corpus(rng, 8, 6, 10);
  const double before = corpus_bleu(hyps, refs).score;
  std::vector<std::size_t> perm{3, 1, 7, 0, 5, 2, 6, 4};
  std::vector<Sentence> h2, r2;
  for (auto i : perm) {
    h2.push_back(hyps[i]);
    r2.push_back(refs[i]);
  }
  EXPECT_EQ(corpus_bleu(h2, r2).score, before);
}

TEST(Bleu, AddOneSmoothing) {
  const auto r = corpus_bleu({{"a", "b", "x", "y"}}, {{"a", "b", "c", "d"}}, true);
  // p1 = 2/4, p2 = (1+1)/(3+1), p3 = 1/3, p4 = 1/2
  EXPECT_NEAR(r.score, 100.0 * std::pow(0.5 * 0.5 * (1.0 / 3.0) * 0.5, 0.25), 1e-12);
}

TEST(Bleu, MisalignedOrEmpty) {
  EXPECT_THROW(corpus_bleu({{"a"}}, {}), DataError);
  EXPECT_THROW(corpus_bleu({}, {}), DataError);
}

TEST(Chrf, HandComputedExample) {
  // orders 1..3 exist on both sides: F = 2/3, 1/2, 0
  EXPECT_NEAR(chrf({{"abc"}}, {{"abd"}}).score, 100.0 * (2.0 / 3.0 + 0.5) / 3.0, 1e-12);
}

TEST(Chrf, IdentityDisjointAndSpaces) {
  const std::vector<Sentence> refs{{"the", "cat"}, {"naïve", "café"}};
  EXPECT_EQ(chrf(refs, refs).score, 100.0);
  EXPECT_EQ(chrf({{"xyz"}, {"qq"}}, refs).score, 0.0);
  EXPECT_EQ(chrf({{"thec", "at"}}, {{"the", "cat"}}).score, 100.0);
}

TEST(Histogram, PartitionsValues) {
  Rng rng(9);
  const auto values = rng.uniform_values(500, -1.0, 1.0);
  const auto h = xmi_histogram(values, XmiVariant::Difference, GeneralSource::GeneralAdapter, 80);
  std::size_t sum = 0;
  double area = 0.0;
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    sum += h.counts[b];
    area += h.density(b) * h.width(b);
  }
  EXPECT_EQ(sum, 500u);
  EXPECT_NEAR(area, 1.0, 1e-12);
  EXPECT_EQ(h.edges.front(), -1.0);
  EXPECT_EQ(h.edges.back(), 1.0);
}

TEST(Histogram, EdgesAndOutOfRange) {
  const auto h = make_histogram({-5.0, -1.0, 0.0, 1.0, 7.0}, 4, -1.0, 1.0);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{2, 0, 1, 2}));
  EXPECT_THROW(make_histogram({}, 0, 0, 1), ConfigError);
  EXPECT_THROW(make_histogram({std::nan("")}, 2, 0, 1), NumericError);
}

TEST(Histogram, TsvAndJson) {
  const auto h = xmi_histogram({0.0, 0.5}, XmiVariant::LogRatio, GeneralSource::MixedCheckpoint, 2);
  std::ostringstream out;
  write_histogram_tsv(out, h);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "bin_left\tbin_right\tcount\tdensity");
  nlohmann::json j = h;
  EXPECT_EQ(j["p_g_source"], "mixed-checkpoint");
  EXPECT_EQ(j["variant"], "log-ratio");
  EXPECT_NE(histogram_svg({{"ours", &h}}, "XMI").find("<svg"), std::string::npos);
  EXPECT_THROW(parse_variant("ratio"), ConfigError);
}

namespace {

struct ScoringFixture {
  data::SyntheticSpec spec;
  data::Corpus corpus;
  data::Vocab vocab;
  std::vector<data::ParallelExample> test;
  model::ModelParams params;

  ScoringFixture() {
    spec.n_domains = 2;
    spec.general_vocab = 6;
    spec.ambiguous_terms = 2;
    spec.exclusive_per_domain = 2;
    spec.min_length = 2;
    spec.max_length = 5;
    spec.train_per_domain = 30;
    spec.dev_per_domain = 4;
    spec.test_per_domain = 6;
    corpus = data::generate_synthetic(spec, Rng(4));
    vocab = data::Vocab::build({&corpus.train}, 100, nullptr);
    test = data::encode_split(vocab, corpus.test, false);
    params = model::init_model(fixtures::toy_config(vocab.size(), 2), Rng(8));
  }
};

}  // namespace

TEST(Scoring, CopiedGeneralAdapterGivesZeroXmi) {
  ScoringFixture f;
  for (std::size_t d = 0; d < 2; ++d) model::copy_adapter(f.params, f.params.general_index(), d);
  const auto scores = score_tokens(f.params, domain_selector(), nullptr, f.test);
  std::size_t gold = 0;
  for (const auto& ex : f.test) gold += ex.target.size();
  ASSERT_EQ(scores.size(), gold);
  for (const auto& s : scores) EXPECT_EQ(s.xmi(XmiVariant::Difference), 0.0);
  const auto h = xmi_histogram(xmi_values(scores, XmiVariant::Difference), XmiVariant::Difference,
                               GeneralSource::GeneralAdapter);
  const auto zero_bin = static_cast<std::size_t>(std::floor((0.0 + 1.0) / 2.0 * 80));
  EXPECT_EQ(h.counts[zero_bin], gold);
}

TEST(Scoring, MixedSourceWithZeroAdaptersGivesZeroXmi) {
  ScoringFixture f;
  for (std::size_t k = 0; k <= 2; ++k) model::zero_adapter(f.params, k);
  const auto scores = score_tokens(f.params, domain_selector(), &f.params, f.test);
  EXPECT_EQ(mean_xmi(scores), 0.0);
  EXPECT_EQ(mean_xmi(scores, XmiVariant::LogRatio), 0.0);
}

TEST(Scoring, ProbabilitiesAreGoldTokenProbabilities) {
  ScoringFixture f;
  const auto scores = score_tokens(f.params, domain_selector(), nullptr, f.test);
  // Entries are ordered by (sentence, position) and follow the gold targets.
  std::size_t i = 0;
  for (std::size_t s = 0; s < f.test.size(); ++s)
    for (std::size_t t = 0; t < f.test[s].target.size(); ++t, ++i) {
      EXPECT_EQ(scores[i].sentence, s);
      EXPECT_EQ(scores[i].position, t);
      EXPECT_EQ(scores[i].token, f.test[s].target[t]);
      EXPECT_GT(scores[i].p_da(), 0.0);
      EXPECT_LE(scores[i].p_da(), 1.0);
      EXPECT_GE(scores[i].xmi(XmiVariant::Difference), -1.0);
      EXPECT_LE(scores[i].xmi(XmiVariant::Difference), 1.0);
    }
}

TEST(Scoring, TokenDump) {
  ScoringFixture f;
  const auto scores = score_tokens(f.params, domain_selector(), nullptr, f.test);
  std::ostringstream out;
  write_token_dump(out, scores, f.vocab);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "sentence_id\tposition\ttoken\tp_da\tp_g\txmi");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 5);
  }
  EXPECT_EQ(rows, scores.size());
}

TEST(Scoring, VocabularyMismatch) {
  ScoringFixture f;
  auto other = model::init_model(fixtures::toy_config(f.vocab.size() + 1, 2), Rng(1));
  EXPECT_THROW(score_tokens(f.params, domain_selector(), &other, f.test), ConfigError);
}

TEST(TermAccuracy, GoldHypothesesAreExact) {
  ScoringFixture f;
  data::SyntheticLexicon lex(f.spec);
  std::vector<Sentence> gold;
  for (const auto& ex : f.corpus.test) gold.push_back(ex.target);
  const auto acc = term_accuracy(lex, f.corpus.test, gold);
  EXPECT_EQ(acc.ambiguous_correct, acc.ambiguous_total);
  EXPECT_EQ(acc.other_correct, acc.other_total);

  // Ambiguous terms translated with the other domain's sense.
  std::vector<Sentence> swapped;
  for (const auto& ex : f.corpus.test) {
    auto hyp = ex.target;
    for (std::size_t i = 0; i < ex.source.size(); ++i)
      if (lex.kind(ex.source[i]) == data::TermKind::Ambiguous)
        hyp[i] = lex.translate(data::DomainId{1 - ex.domain.index}, ex.source[i]);
    swapped.push_back(hyp);
  }
  const auto wrong = term_accuracy(lex, f.corpus.test, swapped);
  EXPECT_EQ(wrong.ambiguous_correct, 0u);
  EXPECT_EQ(wrong.other_correct, wrong.other_total);
  EXPECT_THROW(term_accuracy(lex, f.corpus.test, {}), DataError);
}

TEST(Keywords, MatchBruteForce) {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto train = random_domain_text(rng, 3, 40, 30);
    for (double frac : {0.01, 0.1, 0.5}) {
      const auto idx = extract_tfidf_keywords(train, 3, {frac, {}, false});
      const auto expected = oracles::tfidf_keywords(train, 3, frac);
      for (std::size_t d = 0; d < 3; ++d) {
        std::vector<std::string> got;
        for (const auto& k : idx.per_domain[d]) got.push_back(k.token);
        EXPECT_EQ(got, expected[d]) << "trial " << trial << " fraction " << frac;
      }
    }
  }
}

TEST(Keywords, TermInTwoOfThreeDomains) {
  data::TextSplit train{{data::DomainId{0}, {"a", "b"}, {}},
                        {data::DomainId{1}, {"a", "c"}, {}},
                        {data::DomainId{2}, {"c", "d"}, {}}};
  const auto idx = extract_tfidf_keywords(train, 3, {1.0, {}, true});
  ASSERT_EQ(idx.per_domain[0].size(), 2u);
  EXPECT_EQ(idx.per_domain[0][0].token, "b");
  EXPECT_NEAR(idx.per_domain[0][0].score, std::log(3.0), 1e-15);
  EXPECT_NEAR(idx.per_domain[0][1].score, std::log(1.5), 1e-15);
}

TEST(Keywords, AllDomainTokensNeverKept) {
  Rng rng(3);
  auto train = random_domain_text(rng, 3, 30, 20);
  for (auto& ex : train) ex.source.push_back("shared");
  const auto idx = extract_tfidf_keywords(train, 3, {1.0, {}, false});
  for (std::size_t d = 0; d < 3; ++d) {
    EXPECT_FALSE(idx.contains(d, "shared"));
    for (const auto& k : idx.per_domain[d]) EXPECT_GT(k.score, 0.0);
  }
}

TEST(Keywords, DuplicatingCorpusKeepsSet) {
  Rng rng(12);
  const auto train = random_domain_text(rng, 3, 25, 20);
  auto doubled = train;
  doubled.insert(doubled.end(), train.begin(), train.end());
  const auto a = extract_tfidf_keywords(train, 3, {0.2, {}, false});
  const auto b = extract_tfidf_keywords(doubled, 3, {0.2, {}, false});
  for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(a.set(d), b.set(d));
}

TEST(Keywords, StoplistAndErrors) {
  data::TextSplit train{{data::DomainId{0}, {"a", "the"}, {}}, {data::DomainId{1}, {"b"}, {}}};
  std::istringstream stop("the\n");
  const auto idx = extract_tfidf_keywords(train, 2, {1.0, load_stoplist(stop), false});
  EXPECT_FALSE(idx.contains(0, "the"));
  EXPECT_TRUE(idx.contains(0, "a"));
  EXPECT_THROW(extract_tfidf_keywords(train, 1), ConfigError);
  EXPECT_THROW(extract_tfidf_keywords(train, 3), DataError);
}

TEST(Quartiles, OneSentencePerQuartile) {
  const auto a = assign_quartiles({5, 0, 2, 1});
  EXPECT_EQ(a.members[0], std::vector<std::size_t>{1});
  EXPECT_EQ(a.members[1], std::vector<std::size_t>{3});
  EXPECT_EQ(a.members[2], std::vector<std::size_t>{2});
  EXPECT_EQ(a.members[3], std::vector<std::size_t>{0});
}

TEST(Quartiles, TiesGoToLowerQuartile) {
  const auto a = assign_quartiles({0, 0, 1, 1, 1, 1, 2, 2});
  EXPECT_EQ(a.members[0].size(), 2u);
  EXPECT_EQ(a.members[1].size(), 4u);
  EXPECT_TRUE(a.members[2].empty());
  EXPECT_EQ(a.members[3].size(), 2u);
  const auto same = assign_quartiles(std::vector<std::size_t>(7, 3));
  EXPECT_EQ(same.members[0].size(), 7u);
}

TEST(Quartiles, MatchesSortAndSliceOracle) {
  Rng rng(40);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 1 + rng.uniform_int(40);
    std::vector<std::size_t> counts(n);
    for (auto& c : counts) c = rng.uniform_int(6);
    const auto a = assign_quartiles(counts);
    const auto expected = oracles::slice_quartiles(counts);
    std::size_t covered = 0;
    for (std::size_t q = 0; q < 4; ++q) {
      EXPECT_EQ(a.members[q], expected[q]) << "trial " << trial << " quartile " << q;
      covered += a.members[q].size();
    }
    EXPECT_EQ(covered, n);
  }
}

TEST(Quartiles, IdenticalSystemsGiveZeroDelta) {
  Rng rng(2);
  const auto train = random_domain_text(rng, 2, 30, 10);
  const auto test = random_domain_text(rng, 2, 12, 10);
  std::vector<Sentence> outputs;
  for (const auto& ex : test) outputs.push_back(ex.source);
  outputs[0].push_back("extra");
  const auto idx = extract_tfidf_keywords(train, 2, {0.3, {}, false});
  const auto r = quartile_report(test, idx, outputs, outputs);
  ASSERT_EQ(r.domains.size(), 2u);
  for (const auto& d : r.domains) {
    EXPECT_EQ(d.delta, 0.0);
    for (const auto& b : d.bins)
      if (b.delta) {
        EXPECT_EQ(*b.delta, 0.0);
      }
  }
  EXPECT_THROW(quartile_report(test, idx, outputs, {}), DataError);
}

TEST(Quartiles, ReportMatchesRescoringOracle) {
  Rng rng(17);
  const auto train = random_domain_text(rng, 2, 40, 12);
  const auto test = random_domain_text(rng, 2, 20, 12);
  const auto idx = extract_tfidf_keywords(train, 2, {0.2, {}, false});
  std::vector<Sentence> a, b;
  for (const auto& ex : test) {
    a.push_back(ex.target);
    auto noisy = ex.target;
    if (rng.uniform() < 0.6) noisy[rng.uniform_int(noisy.size())] = "zz";
    b.push_back(noisy);
  }
  const auto report = quartile_report(test, idx, a, b);
  const auto counts = keyword_counts(test, idx);
  for (const auto& dq : report.domains) {
    std::vector<std::size_t> ids, local;
    for (std::size_t i = 0; i < test.size(); ++i)
      if (test[i].domain.index == dq.domain) {
        ids.push_back(i);
        local.push_back(counts[i]);
      }
    const auto slices = oracles::slice_quartiles(local);
    for (std::size_t q = 0; q < 4; ++q) {
      std::vector<Sentence> ha, hb, refs;
      for (auto l : slices[q]) {
        ha.push_back(a[ids[l]]);
        hb.push_back(b[ids[l]]);
        refs.push_back(test[ids[l]].target);
      }
      if (refs.empty()) {
        EXPECT_FALSE(dq.bins[q].delta.has_value());
        continue;
      }
      EXPECT_EQ(*dq.bins[q].delta, corpus_bleu(ha, refs).score - corpus_bleu(hb, refs).score);
      EXPECT_NEAR(*dq.bins[q].bleu_b, oracles::bleu(hb, refs), 1e-9);
    }
  }
}

TEST(Quartiles, LadderCountsFollowAmbiguousTerms) {
  data::SyntheticSpec spec;
  const auto corpus = data::generate_synthetic(spec, Rng(6));
  const auto ladder = data::generate_ambiguity_ladder(spec, 20, 6, Rng(7));
  const data::SyntheticLexicon lex(spec);
  const auto idx = extract_tfidf_keywords(corpus.train, spec.n_domains, {1.0, {}, false});
  const auto counts = keyword_counts(ladder, idx);
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    std::size_t amb = 0;
    for (const auto& t : ladder[i].source) amb += lex.kind(t) == data::TermKind::Ambiguous;
    EXPECT_EQ(amb, i % 20 % 7);
    EXPECT_EQ(counts[i], amb);
  }
}

TEST(Heatmap, Intensities) {
  EXPECT_EQ(heat_intensities({0.2, 0.2, 0.2}), (std::vector<double>{1.0, 1.0, 1.0}));
  EXPECT_EQ(heat_intensities({0.0, -0.3}), (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(heat_intensities({0.5, -0.1, 0.25}), (std::vector<double>{1.0, 0.0, 0.5}));
}

TEST(Heatmap, HtmlAndAnsi) {
  std::vector<HeatmapRow> rows{{"s<0>", {"a", "b"}, {"A", "&B"}, {0.4, 0.0}}};
  const auto html = heatmap_html(rows);
  EXPECT_NE(html.find("rgba(255,0,0,1)"), std::string::npos);
  EXPECT_NE(html.find("&amp;B"), std::string::npos);
  EXPECT_NE(html.find("s&lt;0&gt;"), std::string::npos);
  EXPECT_NE(html.find("data-xmi=\"0\">&amp;B"), std::string::npos);
  const auto ansi = heatmap_ansi(rows);
  EXPECT_NE(ansi.find("\x1b[48;2;255;0;0mA"), std::string::npos);
  rows[0].xmi.pop_back();
  EXPECT_THROW(heatmap_html(rows), DataError);
  EXPECT_THROW(heatmap_ansi(rows), DataError);
}
