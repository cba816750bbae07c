#pragma once

// Subtree substitution: grow a treebank by replacing one constituent of a
// sentence with a constituent taken from another sentence.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fewshot/common.hpp"
#include "fewshot/treebank.hpp"

namespace fewshot {

enum class SourcePolicy { Original, Augmented };

inline SourcePolicy parse_source_policy(const std::string& s) {
  if (s == "original") return SourcePolicy::Original;
  if (s == "augmented") return SourcePolicy::Augmented;
  throw Error("unknown source policy '" + s + "'");
}

struct AugmentConfig {
  std::size_t target_size = 10000;
  std::uint64_t seed = 1;
  SourcePolicy source_policy = SourcePolicy::Original;
  std::size_t max_length = 60;
};

/// Spans that may be replaced: every constituent except the root.
inline std::vector<Span> substitution_targets(const Tree& t) { return t.internal_spans(); }

/// Spans that may be inserted: every constituent of length >= 2, root included.
inline std::vector<Span> substitution_sources(const Tree& t) {
  std::vector<Span> out;
  for (const auto& s : t.spans())
    if (s.length() >= 2) out.push_back(s);
  return out;
}

/// Replaces `target_span` of `target` (tokens and internal structure) with
/// `source_span` of `source`. Enclosing spans stretch and spans to the right
/// shift by the length difference.
inline Example substitute(const Example& target, const Span& target_span, const Example& source,
                          const Span& source_span,
                          std::size_t max_length = std::numeric_limits<std::size_t>::max()) {
  if (!target.tree.contains(target_span)) throw Error("target span " + to_string(target_span) + " is not a constituent");
  if (!source.tree.contains(source_span)) throw Error("source span " + to_string(source_span) + " is not a constituent");
  if (target_span == target.tree.root()) throw Error("the root span cannot be a substitution target");
  if (source_span.length() < 2 || target_span.length() < 2)
    throw Error("single-token spans are not substitutable");

  const std::size_t old_len = target_span.length();
  const std::size_t new_len = source_span.length();
  const std::size_t out_len = target.sentence.size() - old_len + new_len;
  if (out_len > max_length)
    throw Error("substitution yields " + std::to_string(out_len) + " tokens, over the cap of " +
                std::to_string(max_length));

  const bool tagged = target.sentence.has_tags() && source.sentence.has_tags();
  Example out;
  auto append = [&](const Sentence& s, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      out.sentence.tokens.push_back(s.tokens[i]);
      if (tagged) out.sentence.tags.push_back(s.tags[i]);
    }
  };
  append(target.sentence, 0, target_span.begin);
  append(source.sentence, source_span.begin, source_span.end);
  append(target.sentence, target_span.end, target.sentence.size());

  auto shift = [&](std::size_t pos) { return pos - old_len + new_len; };  // for pos >= target_span.end
  std::vector<Span> spans;
  for (const auto& s : target.tree.spans()) {
    if (target_span.contains(s)) continue;  // replaced subtree, target_span included
    if (s.contains(target_span))
      spans.push_back({s.begin, shift(s.end)});
    else if (s.end <= target_span.begin)
      spans.push_back(s);
    else
      spans.push_back({shift(s.begin), shift(s.end)});
  }
  for (const auto& s : source.tree.spans())
    if (source_span.contains(s) && s.length() >= 2)
      spans.push_back({s.begin - source_span.begin + target_span.begin, s.end - source_span.begin + target_span.begin});
  out.tree = Tree(out_len, std::move(spans));
  validate(out);
  return out;
}

/// Grows `base` to `config.target_size` items. Targets are drawn uniformly
/// from the growing set, then uniformly among their non-root constituents;
/// sources are drawn uniformly from the original set (or the growing set) and
/// then uniformly among their constituents. Draws that cannot be applied are
/// resampled, up to 1000 attempts per requested item.
inline Corpus augment_corpus(const Corpus& base, const AugmentConfig& config) {
  if (base.empty()) throw Error("cannot augment an empty corpus");
  if (config.target_size < base.size())
    throw Error("target size " + std::to_string(config.target_size) + " is smaller than the corpus (" +
                std::to_string(base.size()) + ")");
  if (config.max_length == 0) throw Error("maximum length must be positive");
  Corpus out = base;
  out.items.reserve(config.target_size);
  Rng rng(config.seed);
  const std::size_t budget = 1000 * config.target_size;
  std::size_t attempts = 0;
  while (out.size() < config.target_size) {
    if (attempts++ >= budget)
      throw Error("could not reach " + std::to_string(config.target_size) + " items after " +
                  std::to_string(budget) + " draws; every draw was rejected");
    const Example& target = out.items[rng.below(out.size())];
    const auto targets = substitution_targets(target.tree);
    const std::size_t target_pick = targets.empty() ? 0 : rng.below(targets.size());
    const Corpus& pool = config.source_policy == SourcePolicy::Original ? base : out;
    const Example& source = pool.items[rng.below(pool.size())];
    const auto sources = substitution_sources(source.tree);
    if (targets.empty() || sources.empty()) continue;
    const Span target_span = targets[target_pick];
    const Span source_span = sources[rng.below(sources.size())];
    if (target.sentence.size() - target_span.length() + source_span.length() > config.max_length) continue;
    out.items.push_back(substitute(target, target_span, source, source_span, config.max_length));
  }
  return out;
}

}  // namespace fewshot
