#include <gtest/gtest.h>

#include <map>

#include "fewshot/augment.hpp"
#include "oracles.hpp"

using namespace fewshot;

namespace {

const Example kCat = parse_tree("(NT (NT a cat) (NT is drinking milk))");
const Example kKittens = parse_tree("(NT (NT several kittens) (NT were (NT born (NT in (NT the shelter)))))");

}  // namespace

TEST(Substitute, SwapPredicateForSubject) {
  const auto out = substitute(kCat, {2, 5}, kKittens, {0, 2});
  EXPECT_EQ(format_tree(out), "(NT (NT a cat) (NT several kittens))");
}

TEST(Substitute, SwapPredicateForPrepositionalPhrase) {
  const auto out = substitute(kCat, {2, 5}, kKittens, {4, 7});
  EXPECT_EQ(out.sentence.tokens, (std::vector<std::string>{"a", "cat", "in", "the", "shelter"}));
  EXPECT_EQ(format_tree(out), "(NT (NT a cat) (NT in (NT the shelter)))");
}

TEST(Substitute, IdentityIsNoOp) {
  for (const auto& s : substitution_targets(kKittens.tree)) {
    const auto out = substitute(kKittens, s, kKittens, s);
    EXPECT_EQ(out.sentence, kKittens.sentence);
    EXPECT_EQ(out.tree, kKittens.tree);
  }
}

TEST(Substitute, ShiftsEnclosingAndRightSpans) {
  const auto target = parse_tree("(NT (NT x (NT a b) y) (NT c d))");
  const auto out = substitute(target, {1, 3}, kKittens, {2, 7});
  EXPECT_EQ(format_tree(out), "(NT (NT x (NT were (NT born (NT in (NT the shelter)))) y) (NT c d))");
}

TEST(Substitute, CarriesTagsOnlyWhenBothSidesHaveThem) {
  const auto tagged = parse_tree("(S (NP (DT a) (NN cat)) (VP (VBZ sleeps) (RB now)))");
  const auto other = parse_tree("(S (NP (DT the) (NN dog)) (VP (VBD ran)))");
  const auto both = substitute(tagged, {0, 2}, other, {0, 2});
  EXPECT_EQ(both.sentence.tags, (std::vector<std::string>{"DT", "NN", "VBZ", "RB"}));
  const auto mixed = substitute(tagged, {0, 2}, kCat, {0, 2});
  EXPECT_FALSE(mixed.sentence.has_tags());
}

TEST(Substitute, Rejections) {
  EXPECT_THROW(substitute(kCat, {0, 5}, kKittens, {0, 2}), Error);   // root target
  EXPECT_THROW(substitute(kCat, {1, 3}, kKittens, {0, 2}), Error);   // not a constituent
  EXPECT_THROW(substitute(kCat, {2, 5}, kKittens, {0, 3}), Error);
  EXPECT_THROW(substitute(kCat, {2, 5}, kKittens, {0, 7}, 8), Error);  // 9 tokens over a cap of 8
  EXPECT_NO_THROW(substitute(kCat, {2, 5}, kKittens, {0, 7}, 9));
}

TEST(AugmentCorpus, TargetEqualToBaseIsIdentity) {
  Corpus base{{kCat, kKittens}};
  AugmentConfig cfg;
  cfg.target_size = 2;
  const auto out = augment_corpus(base, cfg);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].tree, kCat.tree);
  EXPECT_EQ(out[1].tree, kKittens.tree);
}

TEST(AugmentCorpus, TwoTreeBaseGrowsToFour) {
  Corpus base{{kCat, kKittens}};
  AugmentConfig cfg;
  cfg.target_size = 4;
  cfg.seed = 7;
  const auto out = augment_corpus(base, cfg);
  ASSERT_EQ(out.size(), 4u);
  for (const auto& ex : out) EXPECT_NO_THROW(validate(ex));
}

TEST(AugmentCorpus, ValidDeterministicAndPrefixPreserving) {
  const auto all = read_treebank(oracle::data_path("sample/labeled.txt"));
  Corpus base;
  for (std::size_t i = 0; i < 50; ++i) base.items.push_back(all[i]);
  for (auto policy : {SourcePolicy::Original, SourcePolicy::Augmented}) {
    AugmentConfig cfg;
    cfg.target_size = 1000;
    cfg.max_length = 30;
    cfg.seed = 3;
    cfg.source_policy = policy;
    const auto a = augment_corpus(base, cfg);
    const auto b = augment_corpus(base, cfg);
    ASSERT_EQ(a.size(), 1000u);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].sentence, b[i].sentence);
      EXPECT_EQ(a[i].tree, b[i].tree);
      EXPECT_NO_THROW(validate(a[i]));
      if (i >= base.size()) {
        EXPECT_LE(a[i].sentence.size(), 30u);
      }
    }
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(a[i].tree, base[i].tree);
    cfg.seed = 4;
    const auto c = augment_corpus(base, cfg);
    std::size_t differ = 0;
    for (std::size_t i = base.size(); i < c.size(); ++i) differ += !(c[i].sentence == a[i].sentence);
    EXPECT_GT(differ, 0u);
  }
}

TEST(AugmentCorpus, TokensComeFromTheBaseVocabulary) {
  const auto all = read_treebank(oracle::data_path("sample/labeled.txt"));
  Corpus base;
  for (std::size_t i = 0; i < 20; ++i) base.items.push_back(all[i]);
  std::map<std::string, int> seen;
  for (const auto& ex : base)
    for (const auto& t : ex.sentence.tokens) seen[t] = 1;
  AugmentConfig cfg;
  cfg.target_size = 300;
  for (const auto& ex : augment_corpus(base, cfg))
    for (const auto& t : ex.sentence.tokens) EXPECT_TRUE(seen.count(t)) << t;
}

TEST(AugmentCorpus, Errors) {
  Corpus base{{kCat, kKittens}};
  AugmentConfig cfg;
  cfg.target_size = 1;
  EXPECT_THROW(augment_corpus(base, cfg), Error);
  EXPECT_THROW(augment_corpus(Corpus{}, cfg), Error);
  // single-constituent sentences have no non-root target
  Corpus flat{{parse_tree("(NT a b c)")}};
  cfg.target_size = 2;
  EXPECT_THROW(augment_corpus(flat, cfg), Error);
  // every substitution would exceed the cap
  Corpus big{{parse_tree("(NT (NT a b) c d e f g)")}};
  cfg.max_length = 7;
  cfg.target_size = 3;
  EXPECT_NO_THROW(augment_corpus(big, cfg));
  cfg.max_length = 6;
  EXPECT_THROW(augment_corpus(big, cfg), Error);
}
