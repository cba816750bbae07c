#pragma once

// Structured max-margin training: hinge loss on the loss-augmented argmax,
// Adam updates, and model selection by dev-set unlabeled F1.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fewshot/decoder.hpp"
#include "fewshot/eval.hpp"
#include "fewshot/scorer.hpp"
#include "fewshot/treebank.hpp"

namespace fewshot {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // 0 disables gradient-norm clipping
  std::size_t patience = 5;   // evaluations without improvement
  std::size_t eval_every = 1; // epochs between dev evaluations
  std::size_t max_length = 60;
  std::uint64_t seed = 1;
  std::optional<std::string> checkpoint_path;

  void validate() const {
    if (epochs == 0 || batch_size == 0 || eval_every == 0 || max_length == 0)
      throw Error("epochs, batch size, evaluation frequency and length cap must be positive");
    if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
    if (patience == 0) throw Error("patience must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
      throw Error("invalid Adam hyperparameters");
  }
};

struct DevEvaluation {
  std::size_t epoch = 0;
  double f1 = 0.0;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean hinge loss per training sentence
  std::vector<DevEvaluation> evaluations;
  std::size_t best_epoch = 0;
  double best_dev_f1 = -1.0;
  bool stopped_early = false;
  std::size_t skipped_sentences = 0;  // over the length cap
  double seconds = 0.0;
};

struct TrainResult {
  ScorerModel model;
  TrainReport report;
};

// ---------------------------------------------------------------------------
// Prediction

inline Tree predict(const ScorerModel& model, const Sentence& sentence) {
  return decode(score_spans(model, encode(sentence, model.vocabulary())));
}

inline Corpus predict(const ScorerModel& model, const std::vector<Sentence>& sentences) {
  Corpus out;
  out.items.reserve(sentences.size());
  for (const auto& s : sentences) out.items.push_back({s, predict(model, s)});
  return out;
}

/// Corpus-level unlabeled F1 of the model's predictions against `gold`.
inline double evaluate_f1(const ScorerModel& model, const Corpus& gold, const EvalConfig& config = {}) {
  return score_corpus(gold, predict(model, gold.sentences()), config).f1;
}

// ---------------------------------------------------------------------------
// Loss

struct HingeResult {
  double loss = 0.0;
  Tree augmented;  // loss-augmented argmax
};

/// max(0, score(T^) + delta(gold, T^) - score(gold)). When the loss is
/// positive, adds its subgradient into `grad` scaled by `weight`.
inline HingeResult hinge_loss(const ScorerModel& model, const std::vector<Vocabulary::Id>& ids, const Tree& gold,
                              Parameters* grad = nullptr, Rng* dropout_rng = nullptr, double weight = 1.0) {
  if (gold.length() != ids.size()) throw Error("gold tree does not match sentence length");
  ScoringTape tape;
  const SpanScores scores = score_spans(model, ids, grad ? &tape : nullptr, dropout_rng);
  auto aug = decode_loss_augmented(scores, gold);
  HingeResult out{std::max(0.0, aug.objective - tree_score(scores, gold)), std::move(aug.tree)};
  if (grad && out.loss > 0.0) {
    SpanTable<double> w(ids.size(), 0.0);
    for (const auto& s : out.augmented.spans()) w.at(s) += weight;
    for (const auto& s : gold.spans()) w.at(s) -= weight;
    accumulate_gradient(model, tape, w, *grad);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

class Adam {
 public:
  Adam(const Parameters& like, const TrainConfig& config)
      : config_(config), m_(like.zeros_like()), v_(like.zeros_like()) {}

  void step(Parameters& params, const Parameters& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    std::vector<Matrix*> ps, ms, vs;
    std::vector<const Matrix*> gs;
    params.visit([&](const char*, Matrix& m) { ps.push_back(&m); });
    m_.visit([&](const char*, Matrix& m) { ms.push_back(&m); });
    v_.visit([&](const char*, Matrix& m) { vs.push_back(&m); });
    grad.visit([&](const char*, const Matrix& m) { gs.push_back(&m); });
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (ps[i]->size() == 0) continue;
      ms[i]->array() = config_.beta1 * ms[i]->array() + (1.0 - config_.beta1) * gs[i]->array();
      vs[i]->array() = config_.beta2 * vs[i]->array() + (1.0 - config_.beta2) * gs[i]->array().square();
      ps[i]->array() -=
          config_.learning_rate * (ms[i]->array() / c1) / ((vs[i]->array() / c2).sqrt() + config_.epsilon);
    }
  }

 private:
  TrainConfig config_;
  Parameters m_, v_;
  std::size_t t_ = 0;
};

inline double l2_norm(const Parameters& p) {
  double sq = 0.0;
  p.visit([&](const char*, const Matrix& m) { sq += m.squaredNorm(); });
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Training loop

/// Dev metric used for checkpoint selection; defaults to corpus-level F1 on dev.
using DevMetric = std::function<double(const ScorerModel&)>;
using EpochCallback = std::function<void(std::size_t epoch, double loss, std::optional<double> dev_f1)>;

inline TrainResult train(ScorerModel model, const Corpus& train_set, const Corpus& dev_set, const TrainConfig& config,
                         DevMetric dev_metric = {}, const EpochCallback& on_epoch = {}) {
  config.validate();
  if (train_set.empty()) throw Error("training corpus is empty");
  if (!dev_metric) {
    if (dev_set.empty()) throw Error("development corpus is empty");
    dev_metric = [&dev_set](const ScorerModel& m) { return evaluate_f1(m, dev_set); };
  }
  const auto start = std::chrono::steady_clock::now();

  struct Item {
    std::vector<Vocabulary::Id> ids;
    const Tree* gold;
  };
  std::vector<Item> items;
  TrainReport report;
  for (const auto& ex : train_set) {
    if (ex.sentence.size() > config.max_length) {
      ++report.skipped_sentences;
      continue;
    }
    items.push_back({encode(ex.sentence, model.vocabulary()), &ex.tree});
  }
  if (items.empty()) throw Error("every training sentence exceeds the length cap");

  Rng order_rng(derive_seed(config.seed, 0));
  Rng dropout_rng(derive_seed(config.seed, 1));
  Adam adam(model.params(), config);
  Parameters grad = model.params().zeros_like();
  Parameters best = model.params();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start_i = 0; start_i < order.size(); start_i += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start_i + config.batch_size);
      const double weight = 1.0 / static_cast<double>(stop - start_i);
      grad.set_zero();
      bool any = false;
      for (std::size_t j = start_i; j < stop; ++j) {
        const auto& item = items[order[j]];
        const auto r = hinge_loss(model, item.ids, *item.gold, &grad, &dropout_rng, weight);
        total += r.loss;
        any = any || r.loss > 0.0;
      }
      if (!any) continue;
      if (config.clip_norm > 0.0) {
        const double norm = l2_norm(grad);
        if (norm > config.clip_norm) scale(grad, config.clip_norm / norm);
      }
      adam.step(model.params(), grad);
    }
    const double mean_loss = total / static_cast<double>(items.size());
    report.epoch_loss.push_back(mean_loss);

    std::optional<double> dev_f1;
    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      dev_f1 = dev_metric(model);
      report.evaluations.push_back({epoch, *dev_f1});
      if (*dev_f1 > report.best_dev_f1) {
        report.best_dev_f1 = *dev_f1;
        report.best_epoch = epoch;
        best = model.params();
        since_best = 0;
        if (config.checkpoint_path) save_model(model, *config.checkpoint_path);
      } else {
        ++since_best;
      }
    }
    if (on_epoch) on_epoch(epoch, mean_loss, dev_f1);
    if (since_best >= config.patience) {
      report.stopped_early = epoch < config.epochs;
      break;
    }
  }
  model.params() = std::move(best);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

/// CSV metrics log: one row per epoch; dev_f1 is empty on epochs without an
/// evaluation.
inline void write_train_metrics(std::ostream& out, const TrainReport& report) {
  out << "epoch,loss,dev_f1\n" << std::fixed << std::setprecision(6);
  std::size_t next_eval = 0;
  for (std::size_t i = 0; i < report.epoch_loss.size(); ++i) {
    out << i + 1 << ',' << report.epoch_loss[i] << ',';
    if (next_eval < report.evaluations.size() && report.evaluations[next_eval].epoch == i + 1)
      out << report.evaluations[next_eval++].f1;
    out << '\n';
  }
}

}  // namespace fewshot
