#pragma once

// Bracketed treebank I/O, unlabeled trees, number normalization and vocabularies.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fewshot/common.hpp"

namespace fewshot {

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& detail, const std::string& source = "")
      : Error((source.empty() ? "" : source + ": ") + "line " + std::to_string(line) + ": " + detail),
        line_(line),
        detail_(detail) {}
  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

inline constexpr std::string_view kNumToken = "<num>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kBosToken = "<s>";
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kNodeLabel = "NT";

struct Sentence {
  std::vector<std::string> tokens;
  /// Preterminal labels from the source treebank, one per token, or empty.
  std::vector<std::string> tags;

  std::size_t size() const { return tokens.size(); }
  bool has_tags() const { return !tags.empty(); }
  friend bool operator==(const Sentence&, const Sentence&) = default;
};

/// Unlabeled constituency tree: a set of spans over `length` tokens. Spans are
/// kept sorted in preorder and unique; the root (0, length) is always present.
/// Apart from the root, every span covers at least two tokens.
class Tree {
 public:
  Tree() = default;
  explicit Tree(std::size_t length) : length_(length) { spans_.push_back({0, length}); }
  Tree(std::size_t length, std::vector<Span> spans) : length_(length), spans_(std::move(spans)) {
    spans_.push_back({0, length});
    canonicalize();
    validate();
  }

  std::size_t length() const { return length_; }
  Span root() const { return {0, length_}; }
  const std::vector<Span>& spans() const { return spans_; }
  std::size_t size() const { return spans_.size(); }

  bool contains(const Span& s) const {
    return std::binary_search(spans_.begin(), spans_.end(), s, preorder_less);
  }

  /// Non-root spans of length >= 2.
  std::vector<Span> internal_spans() const {
    std::vector<Span> out;
    for (const auto& s : spans_)
      if (s != root() && s.length() >= 2) out.push_back(s);
    return out;
  }

  /// Throws if any structural invariant is violated.
  void validate() const {
    if (length_ == 0) throw Error("tree over an empty sentence");
    if (spans_.empty() || spans_.front() != root()) throw Error("tree is missing its root span");
    for (std::size_t i = 0; i < spans_.size(); ++i) {
      const Span& s = spans_[i];
      if (s.begin >= s.end || s.end > length_)
        throw Error("span " + to_string(s) + " out of range for length " + std::to_string(length_));
      if (s != root() && s.length() < 2) throw Error("single-token constituent " + to_string(s));
      if (i > 0 && !preorder_less(spans_[i - 1], s)) throw Error("spans not canonical");
      for (std::size_t j = 0; j < i; ++j)
        if (s.crosses(spans_[j]))
          throw Error("crossing spans " + to_string(spans_[j]) + " and " + to_string(s));
    }
  }

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  void canonicalize() {
    std::sort(spans_.begin(), spans_.end(), preorder_less);
    spans_.erase(std::unique(spans_.begin(), spans_.end()), spans_.end());
  }

  std::size_t length_ = 0;
  std::vector<Span> spans_;
};

struct Example {
  Sentence sentence;
  Tree tree;
  friend bool operator==(const Example&, const Example&) = default;
};

struct Corpus {
  std::vector<Example> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  const Example& operator[](std::size_t i) const { return items[i]; }
  auto begin() const { return items.begin(); }
  auto end() const { return items.end(); }

  std::vector<Sentence> sentences() const {
    std::vector<Sentence> out;
    out.reserve(items.size());
    for (const auto& ex : items) out.push_back(ex.sentence);
    return out;
  }
  friend bool operator==(const Corpus&, const Corpus&) = default;
};

inline void validate(const Example& ex) {
  if (ex.sentence.tokens.empty()) throw Error("empty sentence");
  if (ex.sentence.has_tags() && ex.sentence.tags.size() != ex.sentence.size())
    throw Error("tag count does not match token count");
  if (ex.tree.length() != ex.sentence.size())
    throw Error("tree length " + std::to_string(ex.tree.length()) + " does not match sentence length " +
                std::to_string(ex.sentence.size()));
  for (const auto& tok : ex.sentence.tokens) {
    if (tok.empty()) throw Error("empty token");
    for (char c : tok)
      if (std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')')
        throw Error("token '" + tok + "' contains whitespace or a parenthesis");
  }
  ex.tree.validate();
}

// ---------------------------------------------------------------------------
// Reading

namespace detail {

struct SexprNode {
  std::string label;
  std::string word;  // set for leaves
  std::vector<std::unique_ptr<SexprNode>> children;
  bool is_leaf() const { return children.empty() && !word.empty(); }
};

inline std::vector<std::string_view> lex_brackets(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(' || c == ')') {
      out.push_back(line.substr(i, 1));
      ++i;
    } else {
      std::size_t j = i;
      while (j < line.size() && line[j] != '(' && line[j] != ')' &&
             !std::isspace(static_cast<unsigned char>(line[j])))
        ++j;
      out.push_back(line.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

class SexprParser {
 public:
  SexprParser(std::vector<std::string_view> toks, std::size_t line) : toks_(std::move(toks)), line_(line) {}

  std::unique_ptr<SexprNode> parse() {
    if (toks_.empty()) fail("empty tree");
    auto root = node();
    if (pos_ != toks_.size()) fail("trailing material after tree");
    return root;
  }

 private:
  std::unique_ptr<SexprNode> node() {
    expect("(");
    auto n = std::make_unique<SexprNode>();
    if (peek() != "(" && peek() != ")") n->label = std::string(take());
    while (peek() != ")") {
      if (peek() == "(") {
        n->children.push_back(node());
      } else {
        auto leaf = std::make_unique<SexprNode>();
        leaf->word = std::string(take());
        n->children.push_back(std::move(leaf));
      }
    }
    expect(")");
    if (n->children.empty()) fail("node '" + n->label + "' has no children");
    return n;
  }

  std::string_view peek() const {
    if (pos_ >= toks_.size()) fail("unbalanced brackets");
    return toks_[pos_];
  }
  std::string_view take() {
    auto t = peek();
    ++pos_;
    return t;
  }
  void expect(std::string_view what) {
    if (take() != what) fail("expected '" + std::string(what) + "'");
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

  std::vector<std::string_view> toks_;
  std::size_t pos_ = 0;
  std::size_t line_;
};

inline bool is_empty_element(const SexprNode& n) {
  return n.label == "-NONE-" && n.children.size() == 1 && n.children[0]->is_leaf();
}

struct Collected {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
  std::size_t untagged = 0;
  std::vector<Span> spans;
};

// Returns the number of tokens emitted under `n`.
inline std::size_t collect(const SexprNode& n, bool is_root, Collected& out) {
  if (n.is_leaf()) {
    out.tokens.push_back(n.word);
    out.tags.emplace_back();
    ++out.untagged;
    return 1;
  }
  if (is_empty_element(n)) return 0;
  if (!is_root && n.children.size() == 1 && n.children[0]->is_leaf()) {
    out.tokens.push_back(n.children[0]->word);
    out.tags.push_back(n.label);
    return 1;
  }
  const std::size_t start = out.tokens.size();
  for (const auto& c : n.children) collect(*c, false, out);
  const std::size_t end = out.tokens.size();
  if (end - start >= 2) out.spans.push_back({start, end});
  return end - start;
}

}  // namespace detail

/// Parses one bracketed tree. Preterminals and `-NONE-` elements are dropped;
/// every other node becomes a span (unary chains collapse).
inline Example parse_tree(std::string_view text, std::size_t line = 1) {
  detail::SexprParser parser(detail::lex_brackets(text), line);
  auto root = parser.parse();
  detail::Collected c;
  detail::collect(*root, true, c);
  if (c.tokens.empty()) throw ParseError(line, "tree has no tokens");
  Example ex;
  ex.sentence.tokens = std::move(c.tokens);
  if (c.untagged == 0) ex.sentence.tags = std::move(c.tags);
  try {
    ex.tree = Tree(ex.sentence.size(), std::move(c.spans));
    validate(ex);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(line, e.what());
  }
  return ex;
}

using WarningSink = std::function<void(const std::string&)>;

inline Corpus read_treebank(std::istream& in, bool strict = true, const WarningSink& warn = {}) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      corpus.items.push_back(parse_tree(line, line_no));
    } catch (const ParseError& e) {
      if (strict) throw;
      if (warn) warn(std::string("skipping ") + e.what());
    }
  }
  return corpus;
}

inline Corpus read_treebank(const std::string& path, bool strict = true, const WarningSink& warn = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open treebank '" + path + "'");
  try {
    return read_treebank(in, strict, warn);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

/// Escapes literal parentheses inside a raw token.
inline std::string escape_token(std::string_view tok) {
  std::string out;
  for (char c : tok) {
    if (c == '(') out += "-LRB-";
    else if (c == ')') out += "-RRB-";
    else out += c;
  }
  return out;
}

/// Whitespace-tokenized sentences, one per line. Empty lines are errors.
inline std::vector<Sentence> read_sentences(std::istream& in) {
  std::vector<Sentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    Sentence s;
    for (std::string tok; ss >> tok;) s.tokens.push_back(escape_token(tok));
    if (s.tokens.empty()) throw ParseError(line_no, "empty sentence");
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Sentence> read_sentences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open sentence file '" + path + "'");
  try {
    return read_sentences(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.detail(), path);
  }
}

inline void write_sentences(std::ostream& out, const std::vector<Sentence>& sentences) {
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s.tokens[i];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Writing

namespace detail {

inline void format_node(const Example& ex, std::size_t& next_span, std::ostream& out) {
  const auto& spans = ex.tree.spans();
  const Span self = spans[next_span++];
  out << '(' << kNodeLabel;
  std::size_t pos = self.begin;
  while (pos < self.end) {
    out << ' ';
    if (next_span < spans.size() && spans[next_span].begin == pos && self.contains(spans[next_span])) {
      const std::size_t child_end = spans[next_span].end;
      format_node(ex, next_span, out);
      pos = child_end;
    } else {
      if (ex.sentence.has_tags())
        out << '(' << ex.sentence.tags[pos] << ' ' << ex.sentence.tokens[pos] << ')';
      else
        out << ex.sentence.tokens[pos];
      ++pos;
    }
  }
  out << ')';
}

}  // namespace detail

/// Canonical single-line bracketing. Every constituent is labeled NT; tags,
/// when present, are written as preterminals.
inline std::string format_tree(const Example& ex) {
  std::ostringstream out;
  std::size_t next = 0;
  detail::format_node(ex, next, out);
  return out.str();
}

inline void write_treebank(std::ostream& out, const Corpus& corpus) {
  for (const auto& ex : corpus.items) out << format_tree(ex) << '\n';
}

inline void write_treebank(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write treebank '" + path + "'");
  write_treebank(out, corpus);
  if (!out) throw Error("I/O failure writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Normalization

/// Optional sign, digits, optional decimal part, after removing commas.
inline bool is_numeric_token(std::string_view tok) {
  std::string s;
  for (char c : tok)
    if (c != ',') s += c;
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
  const std::size_t int_start = i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == int_start) return false;
  if (i < s.size() && s[i] == '.') {
    const std::size_t frac_start = ++i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == frac_start) return false;
  }
  return i == s.size();
}

inline Sentence normalize_numbers(Sentence s) {
  for (auto& tok : s.tokens)
    if (is_numeric_token(tok)) tok = kNumToken;
  return s;
}

inline Corpus normalize_numbers(Corpus c) {
  for (auto& ex : c.items) ex.sentence = normalize_numbers(std::move(ex.sentence));
  return c;
}

inline std::vector<Sentence> normalize_numbers(std::vector<Sentence> v) {
  for (auto& s : v) s = normalize_numbers(std::move(s));
  return v;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  using Id = std::int32_t;
  static constexpr Id kUnk = 0;
  static constexpr Id kNum = 1;
  static constexpr Id kBos = 2;
  static constexpr Id kEos = 3;
  static constexpr std::size_t kSpecials = 4;

  Vocabulary() {
    for (auto t : {kUnkToken, kNumToken, kBosToken, kEosToken}) add(std::string(t));
  }

  /// Keeps the `size_cap` most frequent tokens (ties: first occurrence).
  static Vocabulary build(const std::vector<Sentence>& sentences,
                          std::size_t size_cap = std::numeric_limits<std::size_t>::max()) {
    if (size_cap == 0) throw Error("vocabulary size cap must be positive");
    struct Stat {
      std::size_t count = 0;
      std::size_t first = 0;
    };
    std::unordered_map<std::string, Stat> stats;
    std::vector<std::string> order;
    Vocabulary vocab;
    for (const auto& s : sentences)
      for (const auto& tok : s.tokens) {
        if (vocab.is_special(tok)) continue;
        auto [it, fresh] = stats.try_emplace(tok, Stat{0, order.size()});
        if (fresh) order.push_back(tok);
        ++it->second.count;
      }
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
      return stats[a].count > stats[b].count;
    });
    if (order.size() > size_cap) order.resize(size_cap);
    for (auto& tok : order) vocab.add(std::move(tok));
    return vocab;
  }

  static Vocabulary build(const Corpus& corpus,
                          std::size_t size_cap = std::numeric_limits<std::size_t>::max()) {
    if (corpus.empty()) throw Error("cannot build a vocabulary from an empty corpus");
    return build(corpus.sentences(), size_cap);
  }

  /// Rebuilds from an explicit id-ordered token list (used by model loading).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    if (tokens.size() < kSpecials) throw Error("vocabulary is missing special tokens");
    for (std::size_t i = 0; i < kSpecials; ++i)
      if (tokens[i] != v.tokens_[i]) throw Error("vocabulary special token mismatch");
    for (std::size_t i = kSpecials; i < tokens.size(); ++i) {
      if (v.index_.count(tokens[i])) throw Error("duplicate vocabulary entry '" + tokens[i] + "'");
      v.add(tokens[i]);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& tok) const { return index_.count(tok) != 0; }
  Id id(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }
  const std::string& token(Id id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool is_special(const std::string& tok) const {
    auto it = index_.find(tok);
    return it != index_.end() && static_cast<std::size_t>(it->second) < kSpecials;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(std::string tok) {
    index_.emplace(tok, static_cast<Id>(tokens_.size()));
    tokens_.push_back(std::move(tok));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Id> index_;
};

inline Vocabulary build_vocabulary(const Corpus& corpus,
                                   std::size_t size_cap = std::numeric_limits<std::size_t>::max()) {
  return Vocabulary::build(corpus, size_cap);
}

inline std::vector<Vocabulary::Id> apply_vocabulary(const Sentence& s, const Vocabulary& vocab) {
  std::vector<Vocabulary::Id> ids;
  ids.reserve(s.size());
  for (const auto& tok : s.tokens) ids.push_back(vocab.id(tok));
  return ids;
}

/// Number normalization followed by vocabulary lookup.
inline std::vector<Vocabulary::Id> encode(const Sentence& s, const Vocabulary& vocab) {
  return apply_vocabulary(normalize_numbers(s), vocab);
}

}  // namespace fewshot
