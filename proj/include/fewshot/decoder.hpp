#pragma once

// Label-aware CKY over the two-label scheme {NT, empty}. Every span of a binary
// derivation is labeled: NT contributes its score, the empty label contributes
// 0 and is collapsed away, which yields n-ary trees. The root is always NT and
// single-token spans carry no decision.
//
// Ties: the smallest split point wins; a span is labeled NT only when its value
// is strictly positive, so an all-zero table decodes to the flat tree.

#include <cmath>
#include <cstddef>
#include <vector>

#include "fewshot/common.hpp"
#include "fewshot/scorer.hpp"
#include "fewshot/treebank.hpp"

namespace fewshot {

struct Chart {
  SpanTable<double> best;
  SpanTable<std::size_t> split;  // 0 for single-token spans
  SpanTable<char> keep;          // 1 = NT
};

namespace detail {

inline void check_finite(const SpanScores& scores) {
  if (scores.length() == 0) throw Error("cannot decode an empty sentence");
  for (double v : scores.values())
    if (!std::isfinite(v)) throw Error("non-finite span score");
}

/// `label_value(b, e)` is the NT value of a non-root span of length >= 2.
template <typename LabelValue>
Chart run_cky(const SpanScores& scores, LabelValue&& label_value) {
  const std::size_t L = scores.length();
  Chart c{SpanTable<double>(L, 0.0), SpanTable<std::size_t>(L, 0), SpanTable<char>(L, 0)};
  for (std::size_t len = 2; len <= L; ++len)
    for (std::size_t b = 0; b + len <= L; ++b) {
      const std::size_t e = b + len;
      std::size_t arg = b + 1;
      double inside = c.best(b, arg) + c.best(arg, e);
      for (std::size_t k = b + 2; k < e; ++k) {
        const double v = c.best(b, k) + c.best(k, e);
        if (v > inside) {
          inside = v;
          arg = k;
        }
      }
      double label = 0.0;
      char keep = 0;
      if (len == L) {
        label = scores(0, L);
        keep = 1;
      } else if (const double nt = label_value(b, e); nt > 0.0) {
        label = nt;
        keep = 1;
      }
      c.best(b, e) = label + inside;
      c.split(b, e) = arg;
      c.keep(b, e) = keep;
    }
  if (L == 1) {
    c.best(0, 1) = scores(0, 1);
    c.keep(0, 1) = 1;
  }
  return c;
}

inline void collect_kept(const Chart& c, std::size_t b, std::size_t e, std::vector<Span>& out) {
  if (e - b < 2) return;
  if (c.keep(b, e)) out.push_back({b, e});
  const std::size_t k = c.split(b, e);
  collect_kept(c, b, k, out);
  collect_kept(c, k, e, out);
}

}  // namespace detail

inline Chart build_chart(const SpanScores& scores) {
  detail::check_finite(scores);
  return detail::run_cky(scores, [&](std::size_t b, std::size_t e) { return scores(b, e); });
}

inline Tree tree_from_chart(const Chart& chart) {
  const std::size_t L = chart.best.length();
  std::vector<Span> spans;
  detail::collect_kept(chart, 0, L, spans);
  return Tree(L, std::move(spans));
}

/// Highest-scoring tree under the sum-of-span-scores model.
inline Tree decode(const SpanScores& scores) { return tree_from_chart(build_chart(scores)); }

/// Sum of the scores of the tree's spans (root included).
inline double tree_score(const SpanScores& scores, const Tree& tree) {
  if (tree.length() != scores.length())
    throw Error("tree over " + std::to_string(tree.length()) + " tokens scored against a table for " +
                std::to_string(scores.length()));
  double total = 0.0;
  for (const auto& s : tree.spans()) total += scores.at(s);
  return total;
}

/// Number of spans (length >= 2, root excluded) labeled NT in exactly one of
/// the two trees.
inline std::size_t hamming_loss(const Tree& gold, const Tree& predicted) {
  if (gold.length() != predicted.length()) throw Error("hamming loss over trees of different lengths");
  std::size_t diff = 0;
  for (const auto& s : gold.internal_spans()) diff += !predicted.contains(s);
  for (const auto& s : predicted.internal_spans()) diff += !gold.contains(s);
  return diff;
}

struct AugmentedDecode {
  Tree tree;
  double objective = 0.0;  // score(tree) + delta
  double delta = 0.0;
};

/// argmax_T score(T) + hamming_loss(gold, T). The loss decomposes over the
/// predicted tree's spans: |gold| + sum_{s in T} (s in gold ? -1 : +1), so it
/// is folded into the NT cell of every span.
inline AugmentedDecode decode_loss_augmented(const SpanScores& scores, const Tree& gold) {
  detail::check_finite(scores);
  const std::size_t L = scores.length();
  if (gold.length() != L)
    throw Error("gold tree has " + std::to_string(gold.length()) + " tokens, scores cover " + std::to_string(L));
  SpanTable<char> in_gold(L, 0);
  const auto gold_spans = gold.internal_spans();
  for (const auto& s : gold_spans) in_gold.at(s) = 1;
  const Chart chart = detail::run_cky(
      scores, [&](std::size_t b, std::size_t e) { return scores(b, e) + (in_gold(b, e) ? -1.0 : 1.0); });
  AugmentedDecode out{tree_from_chart(chart), 0.0, 0.0};
  out.delta = static_cast<double>(hamming_loss(gold, out.tree));
  out.objective = chart.best(0, L) + static_cast<double>(gold_spans.size());
  return out;
}

}  // namespace fewshot
