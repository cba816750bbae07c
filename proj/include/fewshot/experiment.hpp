#pragma once

// Grid experiments: labeled budget x augmentation x self-training steps x
// vocabulary cap, repeated over seeds, reported as mean and stddev test F1.
//
// Grid files are flat "key = value" lines; list-valued keys take comma
// separated values. '#' starts a comment.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fewshot/augment.hpp"
#include "fewshot/selftrain.hpp"

namespace fewshot {

/// "A/B": the first A labeled trees train, the next B select.
struct Budget {
  std::size_t train = 0;
  std::size_t dev = 0;
  friend bool operator==(const Budget&, const Budget&) = default;
};

inline Budget parse_budget(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) throw Error("budget '" + s + "' is not of the form TRAIN/DEV");
  Budget b;
  try {
    std::size_t used = 0;
    b.train = std::stoul(s.substr(0, slash), &used);
    if (used != slash) throw Error("");
    const std::string rest = s.substr(slash + 1);
    b.dev = std::stoul(rest, &used);
    if (used != rest.size()) throw Error("");
  } catch (const std::exception&) {
    throw Error("budget '" + s + "' is not of the form TRAIN/DEV");
  }
  if (b.train == 0 || b.dev == 0) throw Error("budget '" + s + "' needs positive train and dev sizes");
  return b;
}

inline std::string to_string(const Budget& b) { return std::to_string(b.train) + "/" + std::to_string(b.dev); }

/// Splits `labeled` into train and dev by budget.
inline std::pair<Corpus, Corpus> split_budget(const Corpus& labeled, const Budget& b) {
  if (b.train + b.dev > labeled.size())
    throw Error("budget " + to_string(b) + " needs " + std::to_string(b.train + b.dev) + " trees, have " +
                std::to_string(labeled.size()));
  Corpus train_set, dev_set;
  train_set.items.assign(labeled.items.begin(), labeled.items.begin() + static_cast<std::ptrdiff_t>(b.train));
  dev_set.items.assign(labeled.items.begin() + static_cast<std::ptrdiff_t>(b.train),
                       labeled.items.begin() + static_cast<std::ptrdiff_t>(b.train + b.dev));
  return {std::move(train_set), std::move(dev_set)};
}

struct ExperimentGrid {
  std::string labeled;
  std::string test;
  std::optional<std::string> pool;
  std::optional<std::string> vocab_corpus;
  std::optional<std::string> pretrained;
  std::size_t pool_size = 0;  // 0 = whole file

  std::vector<Budget> budgets{{10, 5}};
  std::vector<std::size_t> augment{0};   // 0 = no augmentation
  std::vector<std::size_t> st_steps{0};
  std::vector<std::size_t> vocab_sizes{0};  // 0 = keep all tokens
  std::vector<std::uint64_t> seeds{1};

  ScorerConfig scorer;
  TrainConfig train;
  AugmentConfig augment_config;
  double dev_fraction = 0.1;
};

struct CellKey {
  Budget budget;
  std::size_t augment = 0;
  std::size_t st_steps = 0;
  std::size_t vocab_size = 0;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct RunResult {
  CellKey key;
  std::uint64_t seed = 0;
  double test_f1 = 0.0;
  double dev_f1 = 0.0;  // best dev F1 of the supervised model
  std::size_t train_size = 0;
  std::size_t vocab_size = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw Error("");
    const auto x = std::stoull(v, &used);
    if (used != v.size()) throw Error("");
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw Error("grid key '" + key + "': '" + v + "' is not a non-negative integer");
  }
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw Error("");
    return x;
  } catch (const std::exception&) {
    throw Error("grid key '" + key + "': '" + v + "' is not a number");
  }
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& v, F&& convert) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) {
    if (item.empty()) throw Error("grid key '" + key + "': empty list element");
    out.push_back(convert(item));
  }
  return out;
}

}  // namespace detail

/// Reads a grid file. Relative paths are resolved against `base_dir`.
inline ExperimentGrid parse_grid(std::istream& in, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  ExperimentGrid g;
  std::map<std::string, std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("grid line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) throw Error("grid key '" + key + "': missing value");
    if (seen.count(key)) throw Error("grid key '" + key + "' given twice");
    seen[key] = value;
  }

  auto path = [&](const std::string& v) {
    const std::filesystem::path p(v);
    return (p.is_absolute() || base_dir.empty() ? p : base_dir / p).string();
  };
  auto size_of = [](const std::string& key) { return [key](const std::string& v) { return to_size(key, v); }; };
  auto guarded = [](const std::string& key, auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      const std::string what = e.what();
      if (what.rfind("grid key", 0) == 0) throw;
      throw Error("grid key '" + key + "': " + what);
    }
  };

  for (const auto& [key, v] : seen) {
    guarded(key, [&, &key = key, &v = v] {
      if (key == "labeled") g.labeled = path(v);
      else if (key == "test") g.test = path(v);
      else if (key == "pool") g.pool = path(v);
      else if (key == "vocab_corpus") g.vocab_corpus = path(v);
      else if (key == "pretrained") g.pretrained = path(v);
      else if (key == "pool_size") g.pool_size = to_size(key, v);
      else if (key == "budgets") g.budgets = to_list<Budget>(key, v, parse_budget);
      else if (key == "augment") g.augment = to_list<std::size_t>(key, v, size_of(key));
      else if (key == "st_steps") g.st_steps = to_list<std::size_t>(key, v, size_of(key));
      else if (key == "vocab_sizes")
        g.vocab_sizes = to_list<std::size_t>(key, v, [&](const std::string& x) {
          return x == "all" ? std::size_t{0} : to_size(key, x);
        });
      else if (key == "seeds") g.seeds = to_list<std::uint64_t>(key, v, size_of(key));
      else if (key == "encoder") g.scorer.encoder = parse_encoder_type(v);
      else if (key == "activation") g.scorer.activation = parse_activation(v);
      else if (key == "embedding_dim") g.scorer.embedding_dim = to_size(key, v);
      else if (key == "hidden_dim") g.scorer.hidden_dim = to_size(key, v);
      else if (key == "ff_dim") g.scorer.ff_hidden_dim = to_size(key, v);
      else if (key == "dropout") g.scorer.dropout = to_double(key, v);
      else if (key == "epochs") g.train.epochs = to_size(key, v);
      else if (key == "patience") g.train.patience = to_size(key, v);
      else if (key == "batch_size") g.train.batch_size = to_size(key, v);
      else if (key == "lr") g.train.learning_rate = to_double(key, v);
      else if (key == "eval_every") g.train.eval_every = to_size(key, v);
      else if (key == "max_length") g.train.max_length = g.augment_config.max_length = to_size(key, v);
      else if (key == "source_policy") g.augment_config.source_policy = parse_source_policy(v);
      else if (key == "dev_fraction") g.dev_fraction = to_double(key, v);
      else throw Error("grid key '" + key + "' is not recognized");
    });
  }
  if (g.labeled.empty()) throw Error("grid key 'labeled' is required");
  if (g.test.empty()) throw Error("grid key 'test' is required");
  for (auto s : g.st_steps)
    if (s > 0 && !g.pool) throw Error("grid key 'pool' is required when st_steps > 0");
  for (const auto& [key, list_size] :
       {std::pair<const char*, std::size_t>{"budgets", g.budgets.size()}, {"augment", g.augment.size()},
        {"st_steps", g.st_steps.size()}, {"vocab_sizes", g.vocab_sizes.size()}, {"seeds", g.seeds.size()}})
    if (list_size == 0) throw Error(std::string("grid key '") + key + "' is empty");
  guarded("scorer", [&] { g.scorer.validate(); });
  guarded("train", [&] { g.train.validate(); });
  return g;
}

inline ExperimentGrid read_grid(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open grid file '" + file + "'");
  return parse_grid(in, std::filesystem::path(file).parent_path());
}

/// Corpora shared by every cell.
struct ExperimentData {
  Corpus labeled;
  Corpus test;
  std::vector<Sentence> pool;
  std::vector<Sentence> vocab_extra;
};

inline ExperimentData load_data(const ExperimentGrid& g) {
  ExperimentData d;
  d.labeled = read_treebank(g.labeled);
  d.test = read_treebank(g.test);
  if (g.pool) {
    d.pool = read_sentences(*g.pool);
    if (g.pool_size != 0 && d.pool.size() > g.pool_size) d.pool.resize(g.pool_size);
  }
  if (g.vocab_corpus) d.vocab_extra = read_sentences(*g.vocab_corpus);
  return d;
}

/// Vocabulary over the training sentences plus any extra raw text.
inline Vocabulary cell_vocabulary(const Corpus& train_set, const std::vector<Sentence>& extra, std::size_t cap) {
  std::vector<Sentence> all = train_set.sentences();
  all.insert(all.end(), extra.begin(), extra.end());
  return Vocabulary::build(all, cap == 0 ? std::numeric_limits<std::size_t>::max() : cap);
}

using RunLog = std::function<void(const std::string&)>;

/// One pipeline run: split, (augment), train, (self-train), test.
inline RunResult run_cell(const ExperimentGrid& g, const ExperimentData& d, const CellKey& key, std::uint64_t seed,
                          const RunLog& log = {}) {
  auto note = [&](const std::string& s) {
    if (log) log(s);
  };
  auto [train_set, dev_set] = split_budget(d.labeled, key.budget);
  const Vocabulary vocab = cell_vocabulary(train_set, d.vocab_extra, key.vocab_size);
  if (key.augment > 0) {
    AugmentConfig ac = g.augment_config;
    ac.target_size = std::max(key.augment, train_set.size());
    ac.seed = derive_seed(seed, 100);
    train_set = augment_corpus(train_set, ac);
    note("augmented to " + std::to_string(train_set.size()) + " trees");
  }
  ScorerConfig sc = g.scorer;
  sc.seed = seed;
  TrainConfig tc = g.train;
  tc.seed = derive_seed(seed, 200);
  tc.checkpoint_path.reset();
  auto trained = train(init_model(sc, vocab, g.pretrained), train_set, dev_set, tc);
  note("trained " + std::to_string(trained.report.epoch_loss.size()) + " epochs, best dev F1 " +
       std::to_string(trained.report.best_dev_f1));
  RunResult r{key, seed, 0.0, trained.report.best_dev_f1, train_set.size(), vocab.size()};
  ScorerModel model = std::move(trained.model);
  if (key.st_steps > 0) {
    SelfTrainConfig st;
    st.steps = key.st_steps;
    st.train = tc;
    st.dev_fraction = g.dev_fraction;
    model = self_train(model, d.pool, {}, st, [&](const SelfTrainStep& s) {
              note("self-training step " + std::to_string(s.step) + ": fit F1 " + std::to_string(s.fit_f1));
            }).model;
  }
  r.test_f1 = evaluate_f1(model, d.test);
  return r;
}

inline std::vector<CellKey> grid_cells(const ExperimentGrid& g) {
  std::vector<CellKey> cells;
  for (const auto& b : g.budgets)
    for (auto a : g.augment)
      for (auto s : g.st_steps)
        for (auto v : g.vocab_sizes) cells.push_back({b, a, s, v});
  return cells;
}

inline std::vector<RunResult> run_experiment(const ExperimentGrid& g, const ExperimentData& d,
                                             const std::function<void(const RunResult&)>& on_run = {},
                                             const RunLog& log = {}) {
  std::vector<RunResult> out;
  for (const auto& cell : grid_cells(g))
    for (auto seed : g.seeds) {
      out.push_back(run_cell(g, d, cell, seed, log));
      if (on_run) on_run(out.back());
    }
  return out;
}

inline void write_runs_csv(std::ostream& out, const std::vector<RunResult>& runs) {
  out << "budget,augment,st_steps,vocab_size,seed,train_size,vocab_entries,dev_f1,test_f1\n"
      << std::fixed << std::setprecision(4);
  for (const auto& r : runs)
    out << to_string(r.key.budget) << ',' << r.key.augment << ',' << r.key.st_steps << ',' << r.key.vocab_size << ','
        << r.seed << ',' << r.train_size << ',' << r.vocab_size << ',' << r.dev_f1 << ',' << r.test_f1 << '\n';
}

struct CellSummary {
  CellKey key;
  std::size_t runs = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single run
};

inline std::vector<CellSummary> summarize(const std::vector<RunResult>& runs) {
  std::vector<CellSummary> out;
  for (const auto& r : runs) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CellSummary& c) { return c.key == r.key; });
    if (it == out.end()) {
      out.push_back({r.key, 0, 0.0, 0.0});
      it = out.end() - 1;
    }
    ++it->runs;
    it->mean += r.test_f1;
  }
  for (auto& c : out) c.mean /= static_cast<double>(c.runs);
  for (const auto& r : runs) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CellSummary& c) { return c.key == r.key; });
    it->stddev += (r.test_f1 - it->mean) * (r.test_f1 - it->mean);
  }
  for (auto& c : out) c.stddev = c.runs > 1 ? std::sqrt(c.stddev / static_cast<double>(c.runs - 1)) : 0.0;
  return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<CellSummary>& cells) {
  out << "budget,augment,st_steps,vocab_size,runs,mean_f1,stddev_f1\n" << std::fixed << std::setprecision(4);
  for (const auto& c : cells)
    out << to_string(c.key.budget) << ',' << c.key.augment << ',' << c.key.st_steps << ',' << c.key.vocab_size << ','
        << c.runs << ',' << c.mean << ',' << c.stddev << '\n';
}

}  // namespace fewshot
