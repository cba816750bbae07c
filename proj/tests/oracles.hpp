#pragma once

// Test-only reference implementations. Nothing here calls the decoder.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fewshot/common.hpp"
#include "fewshot/scorer.hpp"
#include "fewshot/treebank.hpp"

#ifndef FEWSHOT_DATA_DIR
#define FEWSHOT_DATA_DIR "data"
#endif

namespace fewshot::oracle {

using SpanSet = std::vector<std::pair<std::size_t, std::size_t>>;

namespace detail {

// All interiors (sets of descendant spans) of a node covering [b, e): split
// into >= 2 consecutive children; children of length >= 2 are constituents.
inline std::vector<SpanSet> interiors(std::size_t b, std::size_t e) {
  std::vector<SpanSet> out;
  if (e - b < 2) {
    out.emplace_back();
    return out;
  }
  // choose the first child [b, k), then the rest [k, e) is either one child or
  // further split. Enumerate compositions recursively.
  std::function<void(std::size_t, SpanSet, std::size_t)> rec = [&](std::size_t start, SpanSet acc,
                                                                    std::size_t children) {
    if (start == e) {
      if (children >= 2) out.push_back(acc);
      return;
    }
    for (std::size_t k = start + 1; k <= e; ++k) {
      if (start == b && k == e) continue;  // a single child covering the node is a unary
      if (k - start == 1) {
        rec(k, acc, children + 1);
      } else {
        for (const auto& inner : interiors(start, k)) {
          SpanSet next = acc;
          next.emplace_back(start, k);
          next.insert(next.end(), inner.begin(), inner.end());
          rec(k, next, children + 1);
        }
      }
    }
  };
  rec(b, {}, 0);
  return out;
}

}  // namespace detail

/// Every distinct unlabeled tree over `length` tokens, as its non-root spans.
inline std::vector<SpanSet> all_trees(std::size_t length) { return detail::interiors(0, length); }

inline Tree to_tree(std::size_t length, const SpanSet& s) {
  std::vector<Span> spans;
  for (auto [b, e] : s) spans.push_back({b, e});
  return Tree(length, spans);
}

inline double brute_score(const SpanScores& scores, const SpanSet& s) {
  double total = scores(0, scores.length());
  for (auto [b, e] : s) total += scores(b, e);
  return total;
}

inline std::size_t brute_hamming(const SpanSet& a, const SpanSet& b) {
  std::set<std::pair<std::size_t, std::size_t>> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::size_t d = 0;
  for (const auto& s : x) d += !y.count(s);
  for (const auto& s : y) d += !x.count(s);
  return d;
}

inline SpanSet span_set(const Tree& t) {
  SpanSet out;
  for (const auto& s : t.internal_spans()) out.emplace_back(s.begin, s.end);
  return out;
}

/// Central difference d f / d x at step h.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

inline std::string data_path(const std::string& rel) { return std::string(FEWSHOT_DATA_DIR) + "/" + rel; }

/// Small random tree over `length` tokens (random binary splits, random collapse).
inline Tree random_tree(std::size_t length, Rng& rng, double keep = 0.6) {
  std::vector<Span> spans;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t b, std::size_t e) {
    if (e - b < 2) return;
    if (!(b == 0 && e == length) && rng.uniform() < keep) spans.push_back({b, e});
    const std::size_t k = b + 1 + rng.below(e - b - 1);
    rec(b, k);
    rec(k, e);
  };
  rec(0, length);
  return Tree(length, spans);
}

struct GradientProbe {
  std::string tensor;
  Eigen::Index row = 0, col = 0;
  Span span;
  double analytic = 0.0, numeric = 0.0, error = 0.0;
};

namespace detail {

// Sign pattern of every hidden unit (ReLU kinks make finite differences lie).
inline std::vector<bool> relu_pattern(const ScorerModel& model, const std::vector<Vocabulary::Id>& ids) {
  ScoringTape tape;
  score_spans(model, ids, &tape);
  std::vector<bool> out(static_cast<std::size_t>(tape.activations.size()));
  for (Eigen::Index i = 0; i < tape.activations.size(); ++i) out[static_cast<std::size_t>(i)] = tape.activations(i) > 0.0;
  return out;
}

}  // namespace detail

/// Compares backprop against central differences on `count` random
/// (parameter, span) pairs. Probes whose perturbation crosses a ReLU kink are
/// redrawn.
inline std::vector<GradientProbe> gradient_probes(ScorerModel model, const std::vector<Vocabulary::Id>& ids,
                                                  std::size_t count, Rng& rng, double h = 1e-5) {
  const std::size_t L = ids.size();
  std::vector<std::pair<std::string, Matrix*>> tensors;
  model.params().visit([&](const char* name, Matrix& m) {
    if (m.size() > 0) tensors.emplace_back(name, &m);
  });
  const bool relu = model.config().activation == Activation::Relu;
  std::vector<GradientProbe> out;
  std::size_t redraws = 0;
  while (out.size() < count) {
    if (redraws > 100 * count) throw Error("too many kink redraws in gradient check");
    GradientProbe p;
    auto& [name, m] = tensors[rng.below(tensors.size())];
    p.tensor = name;
    p.row = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(m->rows())));
    if (name == "embed") {
      // padded sentence columns, otherwise the gradient is trivially zero
      const std::size_t pos = rng.below(L + 2);
      p.col = pos == 0 ? Vocabulary::kBos : pos == L + 1 ? Vocabulary::kEos : ids[pos - 1];
    } else if (name == "position") {
      p.col = static_cast<Eigen::Index>(rng.below(L + 2));
    } else {
      p.col = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(m->cols())));
    }
    const std::size_t b = rng.below(L);
    p.span = {b, b + 1 + rng.below(L - b)};

    double& x = (*m)(p.row, p.col);
    if (relu) {
      const double saved = x;
      x = saved + h;
      const auto up = detail::relu_pattern(model, ids);
      x = saved - h;
      const auto down = detail::relu_pattern(model, ids);
      x = saved;
      if (up != down) {
        ++redraws;
        continue;
      }
    }
    SpanTable<double> weights(L, 0.0);
    weights.at(p.span) = 1.0;
    ScoringTape tape;
    score_spans(model, ids, &tape);
    const Parameters grad = backprop(model, tape, weights);
    std::vector<const Matrix*> g;
    grad.visit([&](const char* n, const Matrix& gm) {
      if (n == p.tensor) g.push_back(&gm);
    });
    p.analytic = (*g.front())(p.row, p.col);
    p.numeric = central_difference([&] { return score_spans(model, ids).at(p.span); }, x, h);
    p.error = relative_error(p.analytic, p.numeric);
    out.push_back(p);
  }
  return out;
}

}  // namespace fewshot::oracle
