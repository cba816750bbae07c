#pragma once

// Unlabeled bracketing precision / recall / F1 in the style of evalb, with
// punctuation removed before comparison.

#include <algorithm>
#include <iomanip>
#include <iterator>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "fewshot/common.hpp"
#include "fewshot/treebank.hpp"

namespace fewshot {

enum class EvalMode { Corpus, SentenceMean };

struct EvalConfig {
  EvalMode mode = EvalMode::Corpus;
  /// Preterminal labels treated as punctuation when gold tags are available.
  std::set<std::string> punct_tags{"''", "``", ",", ".", ":", "-LRB-", "-RRB-", "-NONE-"};
  /// Surface tokens treated as punctuation when tags are not available.
  std::set<std::string> punct_tokens{"''", "``", "`", ",", ".", ":", ";", "?", "!", "--", "...",
                                     "-LRB-", "-RRB-", "-LCB-", "-RCB-", "-LSB-", "-RSB-"};
  /// Drop the whole-sentence bracket and any single-token bracket.
  bool exclude_trivial = false;
  /// Only sentences with at most this many tokens after punctuation removal; 0 = all.
  std::size_t max_length = 0;
};

/// Bracket counts for one sentence pair.
struct BracketCounts {
  std::size_t matched = 0;
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t length = 0;  // tokens after punctuation removal
  bool excluded = false;   // all punctuation, or over the length cutoff

  double precision() const { return predicted ? 100.0 * static_cast<double>(matched) / static_cast<double>(predicted) : 0.0; }
  double recall() const { return gold ? 100.0 * static_cast<double>(matched) / static_cast<double>(gold) : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  /// Per-sentence F1 where a sentence with no brackets on either side is perfect.
  double sentence_f1() const { return gold == 0 && predicted == 0 ? 100.0 : f1(); }
};

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t evaluated = 0;
  std::vector<BracketCounts> sentences;
};

/// Punctuation mask decided by tags when present, else by surface tokens.
inline std::vector<bool> punctuation_mask(const Sentence& s, const EvalConfig& config = {}) {
  std::vector<bool> mask(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    mask[i] = s.has_tags() ? config.punct_tags.count(s.tags[i]) != 0 : config.punct_tokens.count(s.tokens[i]) != 0;
  return mask;
}

/// Removes masked tokens, re-indexes spans, and drops spans that become
/// single-token or duplicate. Returns nullopt when every token is removed.
inline std::optional<Example> discard_punctuation(const Example& ex, const std::vector<bool>& mask) {
  const std::size_t L = ex.sentence.size();
  if (mask.size() != L) throw Error("punctuation mask length mismatch");
  std::vector<std::size_t> before(L + 1, 0);  // kept tokens before position i
  for (std::size_t i = 0; i < L; ++i) before[i + 1] = before[i] + (mask[i] ? 0 : 1);
  const std::size_t kept = before[L];
  if (kept == 0) return std::nullopt;
  Example out;
  for (std::size_t i = 0; i < L; ++i) {
    if (mask[i]) continue;
    out.sentence.tokens.push_back(ex.sentence.tokens[i]);
    if (ex.sentence.has_tags()) out.sentence.tags.push_back(ex.sentence.tags[i]);
  }
  std::vector<Span> spans;
  for (const auto& s : ex.tree.spans()) {
    const Span r{before[s.begin], before[s.end]};
    if (r.length() >= 2) spans.push_back(r);
  }
  out.tree = Tree(kept, std::move(spans));
  return out;
}

inline std::optional<Example> discard_punctuation(const Example& ex, const EvalConfig& config = {}) {
  return discard_punctuation(ex, punctuation_mask(ex.sentence, config));
}

namespace detail {

inline std::vector<Span> scored_spans(const Tree& t, const EvalConfig& config) {
  std::vector<Span> out;
  for (const auto& s : t.spans()) {
    if (config.exclude_trivial && (s == t.root() || s.length() < 2)) continue;
    out.push_back(s);
  }
  return out;
}

}  // namespace detail

/// Counts for one aligned pair. The punctuation mask comes from the gold side
/// and is applied to both trees.
inline BracketCounts score_pair(const Example& gold, const Example& predicted, const EvalConfig& config = {}) {
  if (gold.sentence.size() != predicted.sentence.size())
    throw Error("gold has " + std::to_string(gold.sentence.size()) + " tokens, prediction has " +
                std::to_string(predicted.sentence.size()));
  const auto g_norm = normalize_numbers(gold.sentence);
  const auto p_norm = normalize_numbers(predicted.sentence);
  for (std::size_t i = 0; i < g_norm.size(); ++i)
    if (g_norm.tokens[i] != p_norm.tokens[i])
      throw Error("token mismatch at position " + std::to_string(i) + ": '" + gold.sentence.tokens[i] +
                  "' vs '" + predicted.sentence.tokens[i] + "'");
  const auto mask = punctuation_mask(gold.sentence, config);
  BracketCounts counts;
  const auto g = discard_punctuation(gold, mask);
  if (!g) {
    counts.excluded = true;
    return counts;
  }
  const auto p = discard_punctuation(predicted, mask);
  counts.length = g->sentence.size();
  if (config.max_length != 0 && counts.length > config.max_length) {
    counts.excluded = true;
    return counts;
  }
  const auto gs = detail::scored_spans(g->tree, config);
  const auto ps = detail::scored_spans(p->tree, config);
  counts.gold = gs.size();
  counts.predicted = ps.size();
  std::vector<Span> common;
  std::set_intersection(gs.begin(), gs.end(), ps.begin(), ps.end(), std::back_inserter(common), preorder_less);
  counts.matched = common.size();
  return counts;
}

inline EvalResult score_corpus(const Corpus& gold, const Corpus& predicted, const EvalConfig& config = {}) {
  if (gold.size() != predicted.size())
    throw Error("gold has " + std::to_string(gold.size()) + " trees, prediction has " +
                std::to_string(predicted.size()));
  if (gold.empty()) throw Error("cannot evaluate an empty corpus");
  EvalResult r;
  double f1_sum = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    BracketCounts c;
    try {
      c = score_pair(gold[i], predicted[i], config);
    } catch (const Error& e) {
      throw Error("sentence " + std::to_string(i + 1) + ": " + e.what());
    }
    r.sentences.push_back(c);
    if (c.excluded) continue;
    ++r.evaluated;
    r.matched += c.matched;
    r.gold += c.gold;
    r.predicted += c.predicted;
    f1_sum += c.sentence_f1();
  }
  if (config.mode == EvalMode::Corpus) {
    BracketCounts total{r.matched, r.gold, r.predicted, 0, false};
    r.precision = total.precision();
    r.recall = total.recall();
    r.f1 = total.f1();
  } else {
    double p = 0.0, rec = 0.0;
    for (const auto& c : r.sentences)
      if (!c.excluded) {
        p += c.gold == 0 && c.predicted == 0 ? 100.0 : c.precision();
        rec += c.gold == 0 && c.predicted == 0 ? 100.0 : c.recall();
      }
    const double n = r.evaluated ? static_cast<double>(r.evaluated) : 1.0;
    r.precision = p / n;
    r.recall = rec / n;
    r.f1 = f1_sum / n;
  }
  return r;
}

inline void write_report(std::ostream& out, const EvalResult& r, const EvalConfig& config) {
  out << std::fixed << std::setprecision(2);
  out << "mode            " << (config.mode == EvalMode::Corpus ? "corpus" : "sentence-mean") << '\n'
      << "sentences       " << r.sentences.size() << '\n'
      << "evaluated       " << r.evaluated << '\n'
      << "matched         " << r.matched << '\n'
      << "gold brackets   " << r.gold << '\n'
      << "test brackets   " << r.predicted << '\n'
      << "precision       " << r.precision << '\n'
      << "recall          " << r.recall << '\n'
      << "F1              " << r.f1 << '\n';
}

inline void write_sentence_csv(std::ostream& out, const EvalResult& r) {
  out << "sentence,length,matched,gold,predicted,precision,recall,f1,excluded\n";
  out << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < r.sentences.size(); ++i) {
    const auto& c = r.sentences[i];
    out << i + 1 << ',' << c.length << ',' << c.matched << ',' << c.gold << ',' << c.predicted << ','
        << c.precision() << ',' << c.recall() << ',' << c.sentence_f1() << ',' << (c.excluded ? 1 : 0) << '\n';
  }
}

}  // namespace fewshot
