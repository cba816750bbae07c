#pragma once

// Span scorer: word embeddings, a fencepost encoder, and a feedforward head
// producing one NT score per span. The empty label's score is fixed at 0.
//
// Sentence w_0..w_{L-1} is padded to <s> w_0 .. w_{L-1} </s> (positions
// 0..L+1). Fencepost k sits between w_{k-1} and w_k; its forward encoding is
// the forward state at position k and its backward encoding the backward state
// at position k+1. Span (b, e) is represented as
//     [fwd(e) - fwd(b) ; bwd(b) - bwd(e)]
// and scored by w2 . act(W1 x + b1) + b2.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fewshot/common.hpp"
#include "fewshot/treebank.hpp"

namespace fewshot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SpanScores = SpanTable<double>;

enum class EncoderType : std::uint32_t { Embedding = 0, BiLstm = 1 };
enum class Activation : std::uint32_t { Relu = 0, Tanh = 1 };

inline std::string to_string(EncoderType t) { return t == EncoderType::BiLstm ? "bilstm" : "embedding"; }
inline std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

inline EncoderType parse_encoder_type(const std::string& s) {
  if (s == "bilstm" || s == "lstm") return EncoderType::BiLstm;
  if (s == "embedding" || s == "embedding-only") return EncoderType::Embedding;
  throw Error("unknown encoder type '" + s + "'");
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw Error("unknown activation '" + s + "'");
}

struct ScorerConfig {
  EncoderType encoder = EncoderType::BiLstm;
  Activation activation = Activation::Relu;
  std::size_t embedding_dim = 100;
  std::size_t hidden_dim = 200;     // per direction, BiLSTM only
  std::size_t ff_hidden_dim = 250;
  std::size_t max_positions = 512;  // position table, embedding-only encoder
  double dropout = 0.2;
  std::uint64_t seed = 1;

  /// Width of one direction's fencepost encoding.
  std::size_t encoding_dim() const { return encoder == EncoderType::BiLstm ? hidden_dim : embedding_dim; }

  void validate() const {
    if (embedding_dim == 0 || ff_hidden_dim == 0 || max_positions == 0)
      throw Error("scorer dimensions must be positive");
    if (encoder == EncoderType::BiLstm && hidden_dim == 0) throw Error("encoder hidden size must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must lie in [0, 1)");
  }

  friend bool operator==(const ScorerConfig&, const ScorerConfig&) = default;
};

/// All learnable tensors. Gradients use the same layout.
struct Parameters {
  Matrix embed;     // E x V, one column per vocabulary entry
  Matrix position;  // E x P (embedding-only encoder), else empty
  Matrix fwd_wx, fwd_wh, fwd_b;  // 4H x E, 4H x H, 4H x 1 (gate order i f g o)
  Matrix bwd_wx, bwd_wh, bwd_b;
  Matrix w1_fwd, w1_bwd, b1;  // F x D, F x D, F x 1
  Matrix w2, b2;              // 1 x F, 1 x 1

  template <typename F>
  void visit(F&& f) {
    f("embed", embed);
    f("position", position);
    f("fwd_wx", fwd_wx);
    f("fwd_wh", fwd_wh);
    f("fwd_b", fwd_b);
    f("bwd_wx", bwd_wx);
    f("bwd_wh", bwd_wh);
    f("bwd_b", bwd_b);
    f("w1_fwd", w1_fwd);
    f("w1_bwd", w1_bwd);
    f("b1", b1);
    f("w2", w2);
    f("b2", b2);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<Parameters*>(this)->visit([&](const char* name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
  }

  /// Zero tensors with the same shapes.
  Parameters zeros_like() const {
    Parameters z = *this;
    z.set_zero();
    return z;
  }
  void set_zero() {
    visit([](const char*, Matrix& m) { m.setZero(); });
  }
  std::size_t count() const {
    std::size_t n = 0;
    visit([&](const char*, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }
};

inline void scale(Parameters& p, double factor) {
  p.visit([&](const char*, Matrix& m) { m *= factor; });
}

/// a += factor * b
inline void add_scaled(Parameters& a, const Parameters& b, double factor) {
  std::vector<const Matrix*> rhs;
  b.visit([&](const char*, const Matrix& m) { rhs.push_back(&m); });
  std::size_t i = 0;
  a.visit([&](const char*, Matrix& m) { m += factor * *rhs[i++]; });
}

class ScorerModel {
 public:
  ScorerModel() = default;
  ScorerModel(ScorerConfig config, Vocabulary vocab, Parameters params)
      : config_(std::move(config)), vocab_(std::move(vocab)), params_(std::move(params)) {
    check_shapes();
  }

  const ScorerConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const Parameters& params() const { return params_; }
  Parameters& params() { return params_; }

  void check_shapes() const {
    config_.validate();
    const auto E = static_cast<Eigen::Index>(config_.embedding_dim);
    const auto H = static_cast<Eigen::Index>(config_.hidden_dim);
    const auto F = static_cast<Eigen::Index>(config_.ff_hidden_dim);
    const auto D = static_cast<Eigen::Index>(config_.encoding_dim());
    const auto V = static_cast<Eigen::Index>(vocab_.size());
    const bool lstm = config_.encoder == EncoderType::BiLstm;
    auto expect = [](const Matrix& m, Eigen::Index r, Eigen::Index c, const char* name) {
      if (m.rows() != r || m.cols() != c)
        throw Error(std::string("parameter '") + name + "' has shape " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + ", expected " + std::to_string(r) + "x" + std::to_string(c));
    };
    expect(params_.embed, E, V, "embed");
    expect(params_.position, lstm ? 0 : E, lstm ? 0 : static_cast<Eigen::Index>(config_.max_positions),
           "position");
    const Eigen::Index G = lstm ? 4 * H : 0;
    expect(params_.fwd_wx, G, lstm ? E : 0, "fwd_wx");
    expect(params_.fwd_wh, G, lstm ? H : 0, "fwd_wh");
    expect(params_.fwd_b, G, lstm ? 1 : 0, "fwd_b");
    expect(params_.bwd_wx, G, lstm ? E : 0, "bwd_wx");
    expect(params_.bwd_wh, G, lstm ? H : 0, "bwd_wh");
    expect(params_.bwd_b, G, lstm ? 1 : 0, "bwd_b");
    expect(params_.w1_fwd, F, D, "w1_fwd");
    expect(params_.w1_bwd, F, D, "w1_bwd");
    expect(params_.b1, F, 1, "b1");
    expect(params_.w2, 1, F, "w2");
    expect(params_.b2, 1, 1, "b2");
  }

 private:
  ScorerConfig config_;
  Vocabulary vocab_;
  Parameters params_;
};

// ---------------------------------------------------------------------------
// Initialization

/// Pretrained vectors: one line per token, token followed by its values. A
/// leading "<count> <dim>" header line is skipped.
inline std::unordered_map<std::string, Vector> read_embeddings(std::istream& in, std::size_t expected_dim) {
  std::unordered_map<std::string, Vector> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tok;
    if (!(ss >> tok)) continue;
    std::vector<double> values;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ParseError(line_no, "bad embedding value '" + field + "'");
      }
    }
    if (line_no == 1 && values.size() == 1 && tok.find_first_not_of("0123456789") == std::string::npos)
      continue;
    if (values.size() != expected_dim)
      throw Error("pretrained embedding for '" + tok + "' has dimension " + std::to_string(values.size()) +
                  ", model expects " + std::to_string(expected_dim));
    out[tok] = Eigen::Map<Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  return out;
}

namespace detail {

inline void fill_uniform(Matrix& m, Rng& rng, double bound) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-bound, bound);
}

}  // namespace detail

/// Fresh model; deterministic under `config.seed`. Rows found in the optional
/// pretrained file override the sampled embeddings.
inline ScorerModel init_model(const ScorerConfig& config, const Vocabulary& vocab,
                              const std::optional<std::string>& pretrained_path = std::nullopt) {
  config.validate();
  const auto E = static_cast<Eigen::Index>(config.embedding_dim);
  const auto H = static_cast<Eigen::Index>(config.hidden_dim);
  const auto F = static_cast<Eigen::Index>(config.ff_hidden_dim);
  const auto D = static_cast<Eigen::Index>(config.encoding_dim());
  const auto V = static_cast<Eigen::Index>(vocab.size());
  Rng rng(config.seed);
  Parameters p;
  p.embed.resize(E, V);
  detail::fill_uniform(p.embed, rng, std::sqrt(3.0 / static_cast<double>(E)));
  if (config.encoder == EncoderType::BiLstm) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(H));
    for (Matrix* m : {&p.fwd_wx, &p.fwd_wh, &p.bwd_wx, &p.bwd_wh}) {
      m->resize(4 * H, m == &p.fwd_wx || m == &p.bwd_wx ? E : H);
      detail::fill_uniform(*m, rng, bound);
    }
    for (Matrix* b : {&p.fwd_b, &p.bwd_b}) {
      *b = Matrix::Zero(4 * H, 1);
      b->block(H, 0, H, 1).setOnes();  // forget gate
    }
    p.position.resize(0, 0);
  } else {
    p.position.resize(E, static_cast<Eigen::Index>(config.max_positions));
    detail::fill_uniform(p.position, rng, std::sqrt(3.0 / static_cast<double>(E)));
    for (Matrix* m : {&p.fwd_wx, &p.fwd_wh, &p.fwd_b, &p.bwd_wx, &p.bwd_wh, &p.bwd_b}) m->resize(0, 0);
  }
  const double b1_bound = std::sqrt(6.0 / static_cast<double>(2 * D + F));
  p.w1_fwd.resize(F, D);
  p.w1_bwd.resize(F, D);
  detail::fill_uniform(p.w1_fwd, rng, b1_bound);
  detail::fill_uniform(p.w1_bwd, rng, b1_bound);
  p.b1 = Matrix::Zero(F, 1);
  p.w2.resize(1, F);
  detail::fill_uniform(p.w2, rng, std::sqrt(6.0 / static_cast<double>(F + 1)));
  p.b2 = Matrix::Zero(1, 1);

  if (pretrained_path) {
    std::ifstream in(*pretrained_path);
    if (!in) throw Error("cannot open pretrained embeddings '" + *pretrained_path + "'");
    const auto table = read_embeddings(in, config.embedding_dim);
    for (std::size_t id = 0; id < vocab.size(); ++id) {
      auto it = table.find(vocab.token(static_cast<Vocabulary::Id>(id)));
      if (it != table.end()) p.embed.col(static_cast<Eigen::Index>(id)) = it->second;
    }
  }
  return ScorerModel(config, vocab, std::move(p));
}

// ---------------------------------------------------------------------------
// Forward pass

struct LstmCache {
  Matrix gates;   // 4H x n, post-nonlinearity (i f g o)
  Matrix cells;   // H x n
  Matrix states;  // H x n
};

/// Everything backprop needs from one training-mode forward pass.
struct ScoringTape {
  EncoderType encoder{};
  std::size_t embedding_dim = 0, hidden_dim = 0, ff_hidden_dim = 0, vocab_size = 0;
  Activation activation{};

  std::vector<Vocabulary::Id> padded_ids;
  Matrix inputs;      // E x n, after dropout (plus positions)
  Matrix input_mask;  // E x n dropout scaling, empty when dropout is off
  LstmCache fwd, bwd;
  Matrix fwd_fence, bwd_fence;  // D x (L+1)
  Matrix activations;           // F x S, before dropout
  Matrix hidden_mask;           // F x S, empty when dropout is off

  std::size_t length() const { return padded_ids.size() - 2; }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void lstm_forward(const Matrix& wx, const Matrix& wh, const Matrix& b, const Matrix& inputs, bool reverse,
                         LstmCache& cache) {
  const Eigen::Index H = wh.cols();
  const Eigen::Index n = inputs.cols();
  Matrix pre = wx * inputs;
  pre.colwise() += b.col(0);
  cache.gates.resize(4 * H, n);
  cache.cells.resize(H, n);
  cache.states.resize(H, n);
  Vector h = Vector::Zero(H), c = Vector::Zero(H);
  for (Eigen::Index step = 0; step < n; ++step) {
    const Eigen::Index t = reverse ? n - 1 - step : step;
    Vector a = pre.col(t) + wh * h;
    for (Eigen::Index k = 0; k < H; ++k) {
      const double ig = sigmoid(a(k)), fg = sigmoid(a(H + k)), gg = std::tanh(a(2 * H + k)),
                   og = sigmoid(a(3 * H + k));
      cache.gates(k, t) = ig;
      cache.gates(H + k, t) = fg;
      cache.gates(2 * H + k, t) = gg;
      cache.gates(3 * H + k, t) = og;
      c(k) = fg * c(k) + ig * gg;
      h(k) = og * std::tanh(c(k));
    }
    cache.cells.col(t) = c;
    cache.states.col(t) = h;
  }
}

/// Accumulates parameter gradients and returns d(inputs).
inline Matrix lstm_backward(const Matrix& wx, const Matrix& wh, const Matrix& inputs, bool reverse,
                            const LstmCache& cache, const Matrix& d_states, Matrix& g_wx, Matrix& g_wh,
                            Matrix& g_b) {
  const Eigen::Index H = wh.cols();
  const Eigen::Index n = inputs.cols();
  Matrix d_pre(4 * H, n);
  Matrix prev_states = Matrix::Zero(H, n);
  Vector dh_next = Vector::Zero(H), dc_next = Vector::Zero(H);
  for (Eigen::Index step = n - 1; step >= 0; --step) {
    const Eigen::Index t = reverse ? n - 1 - step : step;
    const bool first = step == 0;
    const Eigen::Index prev = reverse ? t + 1 : t - 1;
    if (!first) prev_states.col(t) = cache.states.col(prev);
    for (Eigen::Index k = 0; k < H; ++k) {
      const double ig = cache.gates(k, t), fg = cache.gates(H + k, t), gg = cache.gates(2 * H + k, t),
                   og = cache.gates(3 * H + k, t);
      const double tc = std::tanh(cache.cells(k, t));
      const double dh = d_states(k, t) + dh_next(k);
      const double d_o = dh * tc;
      const double dc = dh * og * (1.0 - tc * tc) + dc_next(k);
      const double c_prev = first ? 0.0 : cache.cells(k, prev);
      d_pre(k, t) = dc * gg * ig * (1.0 - ig);
      d_pre(H + k, t) = dc * c_prev * fg * (1.0 - fg);
      d_pre(2 * H + k, t) = dc * ig * (1.0 - gg * gg);
      d_pre(3 * H + k, t) = d_o * og * (1.0 - og);
      dc_next(k) = dc * fg;
    }
    dh_next.noalias() = wh.transpose() * d_pre.col(t);
  }
  g_wx.noalias() += d_pre * inputs.transpose();
  g_wh.noalias() += d_pre * prev_states.transpose();
  g_b += d_pre.rowwise().sum();
  return wx.transpose() * d_pre;
}

inline void check_ids(const ScorerModel& model, std::span<const Vocabulary::Id> ids) {
  if (ids.empty()) throw Error("cannot score an empty sentence");
  const auto V = static_cast<Vocabulary::Id>(model.vocabulary().size());
  for (auto id : ids)
    if (id < 0 || id >= V) throw Error("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                                       std::to_string(V));
  if (model.config().encoder == EncoderType::Embedding && ids.size() + 2 > model.config().max_positions)
    throw Error("sentence of length " + std::to_string(ids.size()) + " exceeds the position table");
}

inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = rng.uniform() < rate ? 0.0 : keep;
  return mask;
}

}  // namespace detail

/// Scores every span. Recording a tape puts the pass in training mode;
/// dropout is applied only when a tape and a dropout stream are both given.
inline SpanScores score_spans(const ScorerModel& model, std::span<const Vocabulary::Id> ids,
                              ScoringTape* tape = nullptr, Rng* dropout_rng = nullptr) {
  detail::check_ids(model, ids);
  const auto& cfg = model.config();
  const auto& p = model.params();
  const std::size_t L = ids.size();
  const auto n = static_cast<Eigen::Index>(L + 2);
  const auto E = static_cast<Eigen::Index>(cfg.embedding_dim);
  const bool dropout = tape && dropout_rng && cfg.dropout > 0.0;

  ScoringTape local;
  ScoringTape& t = tape ? *tape : local;
  t.encoder = cfg.encoder;
  t.embedding_dim = cfg.embedding_dim;
  t.hidden_dim = cfg.hidden_dim;
  t.ff_hidden_dim = cfg.ff_hidden_dim;
  t.vocab_size = model.vocabulary().size();
  t.activation = cfg.activation;
  t.padded_ids.assign(1, Vocabulary::kBos);
  t.padded_ids.insert(t.padded_ids.end(), ids.begin(), ids.end());
  t.padded_ids.push_back(Vocabulary::kEos);

  t.inputs.resize(E, n);
  for (Eigen::Index i = 0; i < n; ++i) t.inputs.col(i) = p.embed.col(t.padded_ids[static_cast<std::size_t>(i)]);
  if (dropout) {
    t.input_mask = detail::dropout_mask(E, n, cfg.dropout, *dropout_rng);
    t.inputs.array() *= t.input_mask.array();
  } else {
    t.input_mask.resize(0, 0);
  }

  const Matrix* enc_fwd;
  const Matrix* enc_bwd;
  if (cfg.encoder == EncoderType::BiLstm) {
    detail::lstm_forward(p.fwd_wx, p.fwd_wh, p.fwd_b, t.inputs, false, t.fwd);
    detail::lstm_forward(p.bwd_wx, p.bwd_wh, p.bwd_b, t.inputs, true, t.bwd);
    enc_fwd = &t.fwd.states;
    enc_bwd = &t.bwd.states;
  } else {
    t.inputs += p.position.leftCols(n);
    enc_fwd = enc_bwd = &t.inputs;
  }
  const auto fences = static_cast<Eigen::Index>(L + 1);
  t.fwd_fence = enc_fwd->leftCols(fences);
  t.bwd_fence = enc_bwd->middleCols(1, fences);

  const Matrix proj_fwd = p.w1_fwd * t.fwd_fence;
  const Matrix proj_bwd = p.w1_bwd * t.bwd_fence;
  const auto F = static_cast<Eigen::Index>(cfg.ff_hidden_dim);
  const auto S = static_cast<Eigen::Index>(span_count(L));
  t.activations.resize(F, S);
  for (std::size_t b = 0; b < L; ++b)
    for (std::size_t e = b + 1; e <= L; ++e) {
      const auto col = static_cast<Eigen::Index>(SpanScores::offset_of(L, b, e));
      const auto bi = static_cast<Eigen::Index>(b), ei = static_cast<Eigen::Index>(e);
      auto pre = (proj_fwd.col(ei) - proj_fwd.col(bi) + proj_bwd.col(bi) - proj_bwd.col(ei) + p.b1.col(0)).eval();
      if (cfg.activation == Activation::Relu)
        t.activations.col(col) = pre.cwiseMax(0.0);
      else
        t.activations.col(col) = pre.array().tanh().matrix();
    }
  Eigen::RowVectorXd raw;
  if (dropout) {
    t.hidden_mask = detail::dropout_mask(F, S, cfg.dropout, *dropout_rng);
    raw = p.w2 * t.activations.cwiseProduct(t.hidden_mask);
  } else {
    t.hidden_mask.resize(0, 0);
    raw = p.w2 * t.activations;
  }
  SpanScores scores(L);
  for (Eigen::Index s = 0; s < S; ++s) scores.values()[static_cast<std::size_t>(s)] = raw(s) + p.b2(0, 0);
  return scores;
}

inline SpanScores score_spans(const ScorerModel& model, const std::vector<Vocabulary::Id>& ids,
                              ScoringTape* tape = nullptr, Rng* dropout_rng = nullptr) {
  return score_spans(model, std::span<const Vocabulary::Id>(ids), tape, dropout_rng);
}

// ---------------------------------------------------------------------------
// Backward pass

/// Adds d/dθ sum_s weights(s) * score(s) into `grad`.
inline void accumulate_gradient(const ScorerModel& model, const ScoringTape& tape, const SpanTable<double>& weights,
                                Parameters& grad) {
  const auto& cfg = model.config();
  if (tape.padded_ids.size() < 3 || tape.encoder != cfg.encoder || tape.embedding_dim != cfg.embedding_dim ||
      tape.hidden_dim != cfg.hidden_dim || tape.ff_hidden_dim != cfg.ff_hidden_dim ||
      tape.vocab_size != model.vocabulary().size() || tape.activation != cfg.activation)
    throw Error("scoring tape was not produced by this model");
  const std::size_t L = tape.length();
  if (weights.length() != L) throw Error("span weights do not match the taped sentence length");
  const auto& p = model.params();
  const auto S = static_cast<Eigen::Index>(span_count(L));

  Eigen::RowVectorXd w(S);
  bool any = false;
  for (Eigen::Index s = 0; s < S; ++s) {
    w(s) = weights.values()[static_cast<std::size_t>(s)];
    any = any || w(s) != 0.0;
  }
  if (!any) return;

  const bool dropout = tape.hidden_mask.size() != 0;
  grad.b2(0, 0) += w.sum();
  Matrix d_act;  // F x S
  if (dropout) {
    grad.w2.noalias() += w * (tape.activations.cwiseProduct(tape.hidden_mask)).transpose();
    d_act = (p.w2.transpose() * w).cwiseProduct(tape.hidden_mask);
  } else {
    grad.w2.noalias() += w * tape.activations.transpose();
    d_act = p.w2.transpose() * w;
  }
  Matrix& d_pre = d_act;
  if (cfg.activation == Activation::Relu)
    d_pre = (tape.activations.array() > 0.0).select(d_act, 0.0);
  else
    d_pre.array() *= 1.0 - tape.activations.array().square();

  const auto fences = static_cast<Eigen::Index>(L + 1);
  const auto F = static_cast<Eigen::Index>(cfg.ff_hidden_dim);
  Matrix d_proj_fwd = Matrix::Zero(F, fences), d_proj_bwd = Matrix::Zero(F, fences);
  for (std::size_t b = 0; b < L; ++b)
    for (std::size_t e = b + 1; e <= L; ++e) {
      const auto col = static_cast<Eigen::Index>(SpanScores::offset_of(L, b, e));
      if (w(col) == 0.0) continue;
      const auto bi = static_cast<Eigen::Index>(b), ei = static_cast<Eigen::Index>(e);
      d_proj_fwd.col(ei) += d_pre.col(col);
      d_proj_fwd.col(bi) -= d_pre.col(col);
      d_proj_bwd.col(bi) += d_pre.col(col);
      d_proj_bwd.col(ei) -= d_pre.col(col);
    }
  grad.b1 += d_pre.rowwise().sum();
  grad.w1_fwd.noalias() += d_proj_fwd * tape.fwd_fence.transpose();
  grad.w1_bwd.noalias() += d_proj_bwd * tape.bwd_fence.transpose();
  const Matrix d_fwd_fence = p.w1_fwd.transpose() * d_proj_fwd;
  const Matrix d_bwd_fence = p.w1_bwd.transpose() * d_proj_bwd;

  const auto n = static_cast<Eigen::Index>(L + 2);
  const auto D = static_cast<Eigen::Index>(cfg.encoding_dim());
  Matrix d_enc_fwd = Matrix::Zero(D, n), d_enc_bwd = Matrix::Zero(D, n);
  d_enc_fwd.leftCols(fences) = d_fwd_fence;
  d_enc_bwd.middleCols(1, fences) = d_bwd_fence;

  Matrix d_inputs;
  if (cfg.encoder == EncoderType::BiLstm) {
    d_inputs = detail::lstm_backward(p.fwd_wx, p.fwd_wh, tape.inputs, false, tape.fwd, d_enc_fwd, grad.fwd_wx,
                                     grad.fwd_wh, grad.fwd_b);
    d_inputs += detail::lstm_backward(p.bwd_wx, p.bwd_wh, tape.inputs, true, tape.bwd, d_enc_bwd, grad.bwd_wx,
                                      grad.bwd_wh, grad.bwd_b);
  } else {
    d_inputs = d_enc_fwd + d_enc_bwd;
    grad.position.leftCols(n) += d_inputs;
  }
  if (tape.input_mask.size() != 0) d_inputs.array() *= tape.input_mask.array();
  for (Eigen::Index i = 0; i < n; ++i) grad.embed.col(tape.padded_ids[static_cast<std::size_t>(i)]) += d_inputs.col(i);
}

/// Gradient of sum_s weights(s) * score(s) with respect to every parameter.
inline Parameters backprop(const ScorerModel& model, const ScoringTape& tape, const SpanTable<double>& weights) {
  Parameters grad = model.params().zeros_like();
  accumulate_gradient(model, tape, weights, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Model files

namespace detail {

inline constexpr char kModelMagic[8] = {'F', 'S', 'P', 'A', 'R', 'S', 'E', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}
inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("truncated model file");
  return value;
}
inline std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  if (n > (1u << 24)) throw Error("corrupt model file (string length)");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw Error("truncated model file");
  return s;
}

}  // namespace detail

/// Binary container: magic, version, config, vocabulary, named tensors
/// (row/col counts followed by column-major float64 data, host byte order).
inline void save_model(const ScorerModel& model, std::ostream& out) {
  using namespace detail;
  out.write(kModelMagic, sizeof(kModelMagic));
  put<std::uint32_t>(out, kModelVersion);
  const auto& c = model.config();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.encoder));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.activation));
  put<std::uint64_t>(out, c.embedding_dim);
  put<std::uint64_t>(out, c.hidden_dim);
  put<std::uint64_t>(out, c.ff_hidden_dim);
  put<std::uint64_t>(out, c.max_positions);
  put<double>(out, c.dropout);
  put<std::uint64_t>(out, c.seed);
  const auto& tokens = model.vocabulary().tokens();
  put<std::uint64_t>(out, tokens.size());
  for (const auto& t : tokens) put_string(out, t);
  std::uint32_t count = 0;
  model.params().visit([&](const char*, const Matrix&) { ++count; });
  put<std::uint32_t>(out, count);
  model.params().visit([&](const char* name, const Matrix& m) {
    put_string(out, name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  });
  if (!out) throw Error("I/O failure writing model");
}

inline ScorerModel load_model(std::istream& in) {
  using namespace detail;
  char magic[sizeof(kModelMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) throw Error("not a model file");
  const auto version = get<std::uint32_t>(in);
  if (version != kModelVersion) throw Error("unsupported model file version " + std::to_string(version));
  ScorerConfig c;
  const auto enc = get<std::uint32_t>(in);
  const auto act = get<std::uint32_t>(in);
  if (enc > 1 || act > 1) throw Error("corrupt model file (config)");
  c.encoder = static_cast<EncoderType>(enc);
  c.activation = static_cast<Activation>(act);
  c.embedding_dim = get<std::uint64_t>(in);
  c.hidden_dim = get<std::uint64_t>(in);
  c.ff_hidden_dim = get<std::uint64_t>(in);
  c.max_positions = get<std::uint64_t>(in);
  c.dropout = get<double>(in);
  c.seed = get<std::uint64_t>(in);
  const auto vocab_size = get<std::uint64_t>(in);
  std::vector<std::string> tokens;
  tokens.reserve(vocab_size);
  for (std::uint64_t i = 0; i < vocab_size; ++i) tokens.push_back(get_string(in));
  auto vocab = Vocabulary::from_tokens(tokens);
  const auto count = get<std::uint32_t>(in);
  std::unordered_map<std::string, Matrix> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = get_string(in);
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (rows * cols > (std::uint64_t{1} << 32)) throw Error("corrupt model file (tensor size)");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw Error("truncated model file");
    tensors[name] = std::move(m);
  }
  Parameters p;
  p.visit([&](const char* name, Matrix& m) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(std::string("model file is missing tensor '") + name + "'");
    m = std::move(it->second);
  });
  return ScorerModel(c, std::move(vocab), std::move(p));
}

inline void save_model(const ScorerModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model '" + path + "'");
  save_model(model, out);
}

inline ScorerModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model '" + path + "'");
  return load_model(in);
}

}  // namespace fewshot
