#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fewshot {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Half-open token interval [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  bool contains(const Span& other) const { return begin <= other.begin && other.end <= end; }
  bool crosses(const Span& other) const {
    return (begin < other.begin && other.begin < end && end < other.end) ||
           (other.begin < begin && begin < other.end && other.end < end);
  }

  friend bool operator==(const Span&, const Span&) = default;
};

/// Preorder: earlier begin first, wider span first on equal begin.
inline bool preorder_less(const Span& a, const Span& b) {
  return a.begin != b.begin ? a.begin < b.begin : a.end > b.end;
}

inline std::string to_string(const Span& s) {
  return "(" + std::to_string(s.begin) + "," + std::to_string(s.end) + ")";
}

/// Number of spans over a sentence of `length` tokens.
constexpr std::size_t span_count(std::size_t length) { return length * (length + 1) / 2; }

/// Dense upper-triangular table indexed by span, one value per (b, e) with b < e.
template <typename T>
class SpanTable {
 public:
  SpanTable() = default;
  explicit SpanTable(std::size_t length, T fill = T{})
      : length_(length), values_(span_count(length), fill) {}

  std::size_t length() const { return length_; }
  std::size_t size() const { return values_.size(); }

  T& at(std::size_t b, std::size_t e) {
    check(b, e);
    return values_[offset(b, e)];
  }
  const T& at(std::size_t b, std::size_t e) const {
    check(b, e);
    return values_[offset(b, e)];
  }
  T& operator()(std::size_t b, std::size_t e) { return values_[offset(b, e)]; }
  const T& operator()(std::size_t b, std::size_t e) const { return values_[offset(b, e)]; }
  T& at(const Span& s) { return at(s.begin, s.end); }
  const T& at(const Span& s) const { return at(s.begin, s.end); }

  const std::vector<T>& values() const { return values_; }
  std::vector<T>& values() { return values_; }

  // Row-major by begin: row b holds ends b+1..length.
  static std::size_t offset_of(std::size_t length, std::size_t b, std::size_t e) {
    return b * length - (b * (b - 1)) / 2 + (e - b - 1);
  }

 private:
  std::size_t offset(std::size_t b, std::size_t e) const { return offset_of(length_, b, e); }
  void check(std::size_t b, std::size_t e) const {
    if (!(b < e && e <= length_))
      throw Error("span " + to_string(Span{b, e}) + " out of range for length " +
                  std::to_string(length_));
  }

  std::size_t length_ = 0;
  std::vector<T> values_;
};

/// Deterministic random source. Draws are defined from raw mt19937_64 output,
/// so sequences do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw Error("Rng::below called with n = 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

/// Seed for an independent sub-stream (SplitMix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace fewshot
