#include <gtest/gtest.h>

#include <sstream>

#include "fewshot/treebank.hpp"
#include "oracles.hpp"

using namespace fewshot;

namespace {

std::vector<Span> spans_of(const Example& ex) { return ex.tree.spans(); }

Corpus read_string(const std::string& text, bool strict = true, std::vector<std::string>* warnings = nullptr) {
  std::istringstream in(text);
  return read_treebank(in, strict, [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  });
}

}  // namespace

TEST(ReadTreebank, CatTree) {
  const auto c = read_string("(NT (NT a cat) (NT is drinking milk))\n");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].sentence.tokens, (std::vector<std::string>{"a", "cat", "is", "drinking", "milk"}));
  EXPECT_EQ(spans_of(c[0]), (std::vector<Span>{{0, 5}, {0, 2}, {2, 5}}));
  EXPECT_FALSE(c[0].sentence.has_tags());
}

TEST(ReadTreebank, SingleToken) {
  const auto c = read_string("(NT word)");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].sentence.tokens, std::vector<std::string>{"word"});
  EXPECT_EQ(spans_of(c[0]), (std::vector<Span>{{0, 1}}));
}

TEST(ReadTreebank, UnbalancedIsStrictError) {
  try {
    read_string("(NT (NT a");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(ReadTreebank, LenientSkipsBadLinesWithWarning) {
  std::vector<std::string> warnings;
  const auto c = read_string("(NT a b)\n(NT (NT a\n(NT c d)\n", false, &warnings);
  EXPECT_EQ(c.size(), 2u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("line 2"), std::string::npos);
}

TEST(ReadTreebank, StrictReportsLineNumber) {
  try {
    read_string("(NT a b)\n\n(NT a b) extra\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ReadTreebank, EmptyInputIsEmptyCorpus) { EXPECT_TRUE(read_string("").empty()); }

TEST(ReadTreebank, PreterminalsBecomeTagsAndUnariesCollapse) {
  const auto c = read_string("(ROOT (S (NP (DT the) (NN cat)) (VP (VBD sat)) (. .)))");
  ASSERT_EQ(c.size(), 1u);
  const auto& ex = c[0];
  EXPECT_EQ(ex.sentence.tokens, (std::vector<std::string>{"the", "cat", "sat", "."}));
  EXPECT_EQ(ex.sentence.tags, (std::vector<std::string>{"DT", "NN", "VBD", "."}));
  // ROOT and S share (0,4); VP over one word is not a constituent.
  EXPECT_EQ(spans_of(ex), (std::vector<Span>{{0, 4}, {0, 2}}));
}

TEST(ReadTreebank, EmptyRootLabelAndTraces) {
  const auto c = read_string("( (S (NP (-NONE- *T*-1)) (NP (DT a) (NN b)) (VP (VBD c))))");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].sentence.tokens, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(spans_of(c[0]), (std::vector<Span>{{0, 3}, {0, 2}}));
}

TEST(ReadTreebank, UnaryChainCollapses) {
  const auto c = read_string("(NT (NT a b))");
  EXPECT_EQ(spans_of(c[0]), (std::vector<Span>{{0, 2}}));
}

TEST(WriteTreebank, CanonicalForms) {
  Example ex{{{"a", "b"}, {}}, Tree(2)};
  EXPECT_EQ(format_tree(ex), "(NT a b)");
  Example fig = parse_tree("(X (Y a cat) (Z is drinking milk))");
  EXPECT_EQ(format_tree(fig), "(NT (NT a cat) (NT is drinking milk))");
  Example tagged = parse_tree("(S (DT a) (NN b))");
  EXPECT_EQ(format_tree(tagged), "(NT (DT a) (NN b))");
  Example single = parse_tree("(NT word)");
  EXPECT_EQ(format_tree(single), "(NT word)");
}

TEST(WriteTreebank, EmptyCorpusWritesNothing) {
  std::ostringstream out;
  write_treebank(out, Corpus{});
  EXPECT_EQ(out.str(), "");
}

TEST(WriteTreebank, IoFailureNamesPath) {
  try {
    write_treebank(Corpus{}, "/nonexistent-dir/x.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/x.txt"), std::string::npos);
  }
}

TEST(WriteTreebank, RoundTripIsFixedPointOnRandomTrees) {
  Rng rng(7);
  Corpus corpus;
  for (int i = 0; i < 300; ++i) {
    const std::size_t L = 1 + rng.below(15);
    Sentence s;
    for (std::size_t k = 0; k < L; ++k) s.tokens.push_back("w" + std::to_string(rng.below(50)));
    if (i % 2) {
      for (std::size_t k = 0; k < L; ++k) s.tags.push_back(k % 3 ? "NN" : ".");
    }
    corpus.items.push_back({s, oracle::random_tree(L, rng)});
  }
  std::stringstream buf;
  write_treebank(buf, corpus);
  const auto again = read_treebank(buf);
  ASSERT_EQ(again.size(), corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(again[i].sentence, corpus[i].sentence);
    EXPECT_EQ(again[i].tree, corpus[i].tree);
  }
  std::stringstream buf2;
  write_treebank(buf2, again);
  EXPECT_EQ(buf.str(), buf2.str());
}

TEST(Tree, RejectsCrossingSpans) {
  EXPECT_THROW(Tree(4, {{0, 2}, {1, 3}}), Error);
  EXPECT_THROW(Tree(4, {{1, 2}}), Error);  // single-token constituent
  EXPECT_THROW(Tree(3, {{0, 4}}), Error);
  EXPECT_NO_THROW(Tree(4, {{0, 2}, {2, 4}, {0, 2}}));
}

TEST(ReadSentences, EmptyLineIsErrorWithLine) {
  std::istringstream in("a b\n\nc\n");
  try {
    read_sentences(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream ok("a ( b )\n");
  const auto s = read_sentences(ok);
  EXPECT_EQ(s[0].tokens, (std::vector<std::string>{"a", "-LRB-", "b", "-RRB-"}));
}

TEST(NormalizeNumbers, Examples) {
  Sentence s{{"the", "index", "fell", "120.5", "points"}, {}};
  EXPECT_EQ(normalize_numbers(s).tokens, (std::vector<std::string>{"the", "index", "fell", "<num>", "points"}));
  Sentence plain{{"no", "numbers", "here"}, {}};
  EXPECT_EQ(normalize_numbers(plain), plain);
  Sentence num{{"<num>"}, {}};
  EXPECT_EQ(normalize_numbers(num), num);
}

TEST(NormalizeNumbers, NumericRule) {
  for (const char* yes : {"1", "3.5", "1,200", "-7", "+42", "1,000,000.25", "007"}) EXPECT_TRUE(is_numeric_token(yes)) << yes;
  for (const char* no : {",", "1.", ".5", "1e5", "abc", "12a", "-", "1.2.3", "", "3/4"})
    EXPECT_FALSE(is_numeric_token(no)) << no;
}

TEST(NormalizeNumbers, IdempotentAndLengthPreserving) {
  Rng rng(3);
  const std::vector<std::string> pool{"a", "1", "2.5", "x", "1,000", "-3", "<num>", ",", "b"};
  for (int i = 0; i < 200; ++i) {
    Sentence s;
    for (std::size_t k = 0, n = 1 + rng.below(12); k < n; ++k) s.tokens.push_back(pool[rng.below(pool.size())]);
    const auto once = normalize_numbers(s);
    EXPECT_EQ(once.size(), s.size());
    EXPECT_EQ(normalize_numbers(once), once);
  }
}

TEST(Vocabulary, FrequencyCapAndTies) {
  auto sent = [](std::vector<std::string> t) { return Sentence{std::move(t), {}}; };
  const std::vector<Sentence> corpus{sent({"c", "a", "b", "a", "b", "a"}), sent({"a", "a", "b"})};
  const auto v = Vocabulary::build(corpus, 2);
  EXPECT_EQ(v.size(), Vocabulary::kSpecials + 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("b"));
  EXPECT_FALSE(v.contains("c"));
  EXPECT_EQ(v.token(Vocabulary::kSpecials), "a");

  const auto all = Vocabulary::build(corpus);
  EXPECT_EQ(all.size(), Vocabulary::kSpecials + 3);

  const std::vector<Sentence> tie{sent({"x", "a", "b", "b", "a"})};
  const auto one = Vocabulary::build(tie, 1);
  EXPECT_TRUE(one.contains("a"));
  EXPECT_FALSE(one.contains("b"));

  EXPECT_THROW(Vocabulary::build(corpus, 0), Error);
}

TEST(Vocabulary, SpecialsAlwaysPresentAndDeterministic) {
  const std::vector<Sentence> corpus{{{"<num>", "a", "<unk>", "a"}, {}}};
  const auto v = Vocabulary::build(corpus, 1);
  EXPECT_EQ(v.id("<unk>"), Vocabulary::kUnk);
  EXPECT_EQ(v.id("<num>"), Vocabulary::kNum);
  EXPECT_EQ(v.size(), Vocabulary::kSpecials + 1);
  EXPECT_EQ(Vocabulary::build(corpus, 1), v);
}

TEST(ApplyVocabulary, MapsUnknownsToUnk) {
  const std::vector<Sentence> corpus{{{"a"}, {}}};
  const auto v = Vocabulary::build(corpus);
  EXPECT_EQ(apply_vocabulary({{"a", "zzz"}, {}}, v), (std::vector<Vocabulary::Id>{v.id("a"), Vocabulary::kUnk}));
  EXPECT_EQ(apply_vocabulary({{"a", "a"}, {}}, v), (std::vector<Vocabulary::Id>{v.id("a"), v.id("a")}));
  EXPECT_EQ(apply_vocabulary({{"<num>"}, {}}, v), (std::vector<Vocabulary::Id>{Vocabulary::kNum}));
  EXPECT_EQ(encode({{"3,000"}, {}}, v), (std::vector<Vocabulary::Id>{Vocabulary::kNum}));
}

TEST(ReadTreebank, SampleCorpusLoads) {
  const auto c = read_treebank(oracle::data_path("sample/labeled.txt"));
  EXPECT_EQ(c.size(), 300u);
  for (const auto& ex : c) EXPECT_NO_THROW(validate(ex));
}
