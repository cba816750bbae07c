#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fewshot/scorer.hpp"
#include "oracles.hpp"

using namespace fewshot;

namespace {

Vocabulary toy_vocab() {
  return Vocabulary::build(std::vector<Sentence>{{{"a", "cat", "is", "drinking", "milk", "the", "dog"}, {}}});
}

ScorerConfig small_config(EncoderType enc, Activation act = Activation::Relu) {
  ScorerConfig c;
  c.encoder = enc;
  c.activation = act;
  c.embedding_dim = 6;
  c.hidden_dim = 5;
  c.ff_hidden_dim = 7;
  c.max_positions = 40;
  c.seed = 3;
  return c;
}

std::vector<Vocabulary::Id> ids_of(const Vocabulary& v, std::vector<std::string> toks) {
  return apply_vocabulary(Sentence{std::move(toks), {}}, v);
}

class ScorerBothEncoders : public ::testing::TestWithParam<EncoderType> {};

}  // namespace

TEST_P(ScorerBothEncoders, OneScorePerSpan) {
  const auto v = toy_vocab();
  const auto m = init_model(small_config(GetParam()), v);
  const auto s = score_spans(m, ids_of(v, {"a", "cat", "is", "drinking", "milk"}));
  EXPECT_EQ(s.length(), 5u);
  EXPECT_EQ(s.size(), 15u);
}

TEST_P(ScorerBothEncoders, ZeroParametersGiveZeroScores) {
  const auto v = toy_vocab();
  auto m = init_model(small_config(GetParam()), v);
  m.params().set_zero();
  const auto scores = score_spans(m, ids_of(v, {"a", "cat", "is"}));
  for (double x : scores.values()) EXPECT_EQ(x, 0.0);
}

TEST_P(ScorerBothEncoders, EvalModeIsBitIdentical) {
  const auto v = toy_vocab();
  const auto m = init_model(small_config(GetParam()), v);
  const auto ids = ids_of(v, {"the", "dog", "is", "drinking", "milk", "zzz"});
  EXPECT_EQ(score_spans(m, ids).values(), score_spans(m, ids).values());
  ScoringTape tape;
  EXPECT_EQ(score_spans(m, ids, &tape).values(), score_spans(m, ids).values());  // tape without rng: no dropout
}

TEST_P(ScorerBothEncoders, InitIsDeterministic) {
  const auto v = toy_vocab();
  const auto a = init_model(small_config(GetParam()), v);
  const auto b = init_model(small_config(GetParam()), v);
  std::vector<Matrix> ma, mb;
  a.params().visit([&](const char*, const Matrix& m) { ma.push_back(m); });
  b.params().visit([&](const char*, const Matrix& m) { mb.push_back(m); });
  ASSERT_EQ(ma.size(), mb.size());
  for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_TRUE(ma[i] == mb[i]);
  auto c = small_config(GetParam());
  c.seed = 4;
  EXPECT_FALSE(init_model(c, v).params().w2 == a.params().w2);
}

TEST_P(ScorerBothEncoders, GradientMatchesFiniteDifferences) {
  const auto v = toy_vocab();
  for (auto act : {Activation::Relu, Activation::Tanh}) {
    const auto m = init_model(small_config(GetParam(), act), v);
    Rng rng(21);
    const auto probes = oracle::gradient_probes(m, ids_of(v, {"a", "cat", "zzz", "is", "drinking", "milk"}), 120, rng);
    ASSERT_EQ(probes.size(), 120u);
    for (const auto& p : probes)
      EXPECT_LE(p.error, 1e-4) << p.tensor << "(" << p.row << "," << p.col << ") span " << to_string(p.span)
                               << " analytic " << p.analytic << " numeric " << p.numeric;
  }
}

TEST_P(ScorerBothEncoders, GradientIsLinearInWeights) {
  const auto v = toy_vocab();
  const auto m = init_model(small_config(GetParam()), v);
  const auto ids = ids_of(v, {"a", "cat", "is", "drinking"});
  ScoringTape tape;
  score_spans(m, ids, &tape);
  SpanTable<double> w1(4, 0.0), w2(4, 0.0), both(4, 0.0);
  w1(0, 2) = 1.0;
  w2(1, 4) = -2.5;
  both(0, 2) = 1.0;
  both(1, 4) = -2.5;
  Parameters sum = backprop(m, tape, w1);
  add_scaled(sum, backprop(m, tape, w2), 1.0);
  const Parameters direct = backprop(m, tape, both);
  std::vector<const Matrix*> a, b;
  sum.visit([&](const char*, const Matrix& x) { a.push_back(&x); });
  direct.visit([&](const char*, const Matrix& x) { b.push_back(&x); });
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i]->size() > 0) {
      EXPECT_LE((*a[i] - *b[i]).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST_P(ScorerBothEncoders, ZeroWeightsGiveZeroGradient) {
  const auto v = toy_vocab();
  const auto m = init_model(small_config(GetParam()), v);
  ScoringTape tape;
  score_spans(m, ids_of(v, {"a", "cat", "is"}), &tape);
  const auto g = backprop(m, tape, SpanTable<double>(3, 0.0));
  g.visit([](const char* name, const Matrix& x) {
    if (x.size()) {
      EXPECT_EQ(x.cwiseAbs().maxCoeff(), 0.0) << name;
    }
  });
}

TEST_P(ScorerBothEncoders, SaveLoadRoundTripIsExact) {
  const auto v = toy_vocab();
  const auto m = init_model(small_config(GetParam()), v);
  std::stringstream buf;
  save_model(m, buf);
  const auto back = load_model(buf);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.vocabulary(), m.vocabulary());
  const auto ids = ids_of(v, {"a", "cat", "is", "drinking", "milk"});
  EXPECT_EQ(score_spans(back, ids).values(), score_spans(m, ids).values());
  std::stringstream again;
  save_model(back, again);
  EXPECT_EQ(buf.str(), again.str());
}

INSTANTIATE_TEST_SUITE_P(Encoders, ScorerBothEncoders, ::testing::Values(EncoderType::BiLstm, EncoderType::Embedding),
                         [](const auto& info) { return to_string(info.param); });

TEST(Scorer, DropoutOnlyWithTapeAndRng) {
  const auto v = toy_vocab();
  auto c = small_config(EncoderType::BiLstm);
  c.dropout = 0.5;
  const auto m = init_model(c, v);
  const auto ids = ids_of(v, {"a", "cat", "is", "drinking"});
  Rng rng(1);
  ScoringTape tape;
  const auto dropped = score_spans(m, ids, &tape, &rng);
  EXPECT_NE(dropped.values(), score_spans(m, ids).values());
  EXPECT_EQ(score_spans(m, ids, nullptr, &rng).values(), score_spans(m, ids).values());
}

TEST(Scorer, GradientUnderDropoutMatchesFixedMaskDifferences) {
  // With a fixed dropout stream the taped function is smooth in the weights.
  const auto v = toy_vocab();
  auto c = small_config(EncoderType::BiLstm, Activation::Tanh);
  c.dropout = 0.3;
  auto m = init_model(c, v);
  const auto ids = ids_of(v, {"a", "cat", "is", "drinking", "milk"});
  auto taped = [&] {
    Rng rng(9);
    ScoringTape t;
    return score_spans(m, ids, &t, &rng).at(1, 4);
  };
  Rng rng(9);
  ScoringTape tape;
  score_spans(m, ids, &tape, &rng);
  SpanTable<double> w(5, 0.0);
  w(1, 4) = 1.0;
  const auto g = backprop(m, tape, w);
  for (auto [r, col] : {std::pair{0, 0}, {3, 2}, {6, 4}}) {
    const double numeric = oracle::central_difference(taped, m.params().w1_fwd(r, col));
    EXPECT_LE(oracle::relative_error(g.w1_fwd(r, col), numeric), 1e-4);
  }
  const double numeric = oracle::central_difference(taped, m.params().embed(2, v.id("cat")));
  EXPECT_LE(oracle::relative_error(g.embed(2, v.id("cat")), numeric), 1e-4);
}

TEST(Scorer, RejectsBadInput) {
  const auto v = toy_vocab();
  const auto m = init_model(small_config(EncoderType::Embedding), v);
  EXPECT_THROW(score_spans(m, std::vector<Vocabulary::Id>{}), Error);
  EXPECT_THROW(score_spans(m, std::vector<Vocabulary::Id>{static_cast<Vocabulary::Id>(v.size())}), Error);
  EXPECT_THROW(score_spans(m, std::vector<Vocabulary::Id>(39, 4)), Error);  // past the position table
}

TEST(Scorer, TapeFromAnotherModelIsRejected) {
  const auto v = toy_vocab();
  const auto a = init_model(small_config(EncoderType::BiLstm), v);
  const auto b = init_model(small_config(EncoderType::Embedding), v);
  ScoringTape tape;
  score_spans(a, ids_of(v, {"a", "cat"}), &tape);
  EXPECT_THROW(backprop(b, tape, SpanTable<double>(2, 1.0)), Error);
  EXPECT_THROW(backprop(a, tape, SpanTable<double>(3, 1.0)), Error);
}

TEST(Pretrained, RowsAreCopiedExactly) {
  const auto v = toy_vocab();
  const auto path = std::filesystem::temp_directory_path() / "fewshot_emb_test.txt";
  {
    std::ofstream out(path);
    out << "2 6\n";
    out << "cat 0.5 -1 2 0.125 3 -0.25\n";
    out << "unseen 1 1 1 1 1 1\n";
  }
  const auto m = init_model(small_config(EncoderType::BiLstm), v, path.string());
  Vector expected(6);
  expected << 0.5, -1, 2, 0.125, 3, -0.25;
  EXPECT_TRUE(m.params().embed.col(v.id("cat")) == expected);
  const auto plain = init_model(small_config(EncoderType::BiLstm), v);
  EXPECT_TRUE(m.params().embed.col(v.id("dog")) == plain.params().embed.col(v.id("dog")));

  auto c = small_config(EncoderType::BiLstm);
  c.embedding_dim = 12;
  EXPECT_THROW(init_model(c, v, path.string()), Error);
  std::filesystem::remove(path);
}

TEST(ModelFile, RejectsGarbage) {
  std::stringstream junk("not a model at all");
  EXPECT_THROW(load_model(junk), Error);
  const auto v = toy_vocab();
  std::stringstream buf;
  save_model(init_model(small_config(EncoderType::BiLstm), v), buf);
  std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_model(truncated), Error);
}
