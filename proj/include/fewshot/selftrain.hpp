#pragma once

// Iterative self-training: model i is trained on model i-1's predictions over
// an unlabeled pool. The pool is plain sentences, so no gold tree can reach
// this code path.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fewshot/trainer.hpp"

namespace fewshot {

struct SelfTrainConfig {
  std::size_t steps = 5;
  TrainConfig train;
  bool warm_start = false;
  /// Fraction of the pool held out (as predicted trees) for model selection
  /// when no separate dev pool is given.
  double dev_fraction = 0.1;
  /// When set, predicted treebanks are written here as step<i>-train.txt / step<i>-dev.txt.
  std::optional<std::string> prediction_dir;
};

struct SelfTrainStep {
  std::size_t step = 0;
  TrainReport report;
  double fit_f1 = 0.0;  // model i against model i-1's predictions on its training pool
  std::size_t train_size = 0;
  std::size_t dev_size = 0;
};

struct SelfTrainResult {
  ScorerModel model;
  std::vector<SelfTrainStep> steps;
};

/// One predicted tree per sentence.
inline Corpus relabel(const ScorerModel& model, const std::vector<Sentence>& pool) { return predict(model, pool); }

using StepCallback = std::function<void(const SelfTrainStep&)>;

inline SelfTrainResult self_train(const ScorerModel& initial, const std::vector<Sentence>& pool,
                                  const std::vector<Sentence>& dev_pool, const SelfTrainConfig& config,
                                  const StepCallback& on_step = {}) {
  SelfTrainResult result{initial, {}};
  if (config.steps == 0) return result;
  if (pool.empty()) throw Error("self-training needs a non-empty sentence pool");

  std::vector<Sentence> train_pool = pool;
  std::vector<Sentence> held_out = dev_pool;
  if (held_out.empty()) {
    if (!(config.dev_fraction > 0.0 && config.dev_fraction < 1.0))
      throw Error("dev fraction must lie in (0, 1) when no dev pool is given");
    std::size_t n_dev = static_cast<std::size_t>(static_cast<double>(pool.size()) * config.dev_fraction);
    n_dev = std::max<std::size_t>(1, n_dev);
    if (n_dev >= pool.size()) throw Error("sentence pool too small to hold out a dev slice");
    held_out.assign(pool.end() - static_cast<std::ptrdiff_t>(n_dev), pool.end());
    train_pool.resize(pool.size() - n_dev);
  }

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const ScorerModel& previous = result.model;
    const Corpus labeled = relabel(previous, train_pool);
    const Corpus dev_labeled = relabel(previous, held_out);
    if (config.prediction_dir) {
      std::filesystem::create_directories(*config.prediction_dir);
      const std::string stem = *config.prediction_dir + "/step" + std::to_string(step);
      write_treebank(labeled, stem + "-train.txt");
      write_treebank(dev_labeled, stem + "-dev.txt");
    }
    ScorerModel fresh = previous;
    if (!config.warm_start) {
      ScorerConfig sc = previous.config();
      sc.seed = derive_seed(initial.config().seed, step);
      fresh = init_model(sc, previous.vocabulary());
    }
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.train.seed, step);
    auto trained = train(std::move(fresh), labeled, dev_labeled, tc);

    SelfTrainStep info;
    info.step = step;
    info.report = std::move(trained.report);
    info.fit_f1 = evaluate_f1(trained.model, labeled);
    info.train_size = labeled.size();
    info.dev_size = dev_labeled.size();
    result.model = std::move(trained.model);
    if (on_step) on_step(info);
    result.steps.push_back(std::move(info));
  }
  return result;
}

}  // namespace fewshot
