// fewshot: command-line front end for the few-shot constituency parsing toolkit.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "fewshot/augment.hpp"
#include "fewshot/eval.hpp"
#include "fewshot/experiment.hpp"
#include "fewshot/selftrain.hpp"
#include "fewshot/trainer.hpp"
#include "fewshot/treebank.hpp"

namespace {

using namespace fewshot;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool g_quiet = false;

void log(const std::string& msg) {
  if (!g_quiet) std::cerr << msg << '\n';
}

void log_config(const CLI::App& sub) {
  if (g_quiet) return;
  std::cerr << "# " << sub.get_name() << " resolved config\n" << sub.config_to_str(true, false);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  return out;
}

/// Writes through `body` to a file, or to stdout for "-".
template <typename F>
void with_output(const std::string& path, F&& body) {
  if (path == "-") {
    body(std::cout);
    std::cout.flush();
    return;
  }
  auto out = open_out(path);
  body(out);
  if (!out) throw Error("I/O failure writing '" + path + "'");
}

struct ModelOptions {
  ScorerConfig scorer;
  std::string encoder = "bilstm";
  std::string activation = "relu";

  void add(CLI::App* app) {
    auto* g = app->add_option_group("Model");
    g->add_option("--encoder", encoder, "Sentence encoder: bilstm or embedding")
        ->check(CLI::IsMember({"bilstm", "embedding"}))
        ->capture_default_str();
    g->add_option("--activation", activation, "Hidden activation: relu or tanh")
        ->check(CLI::IsMember({"relu", "tanh"}))
        ->capture_default_str();
    g->add_option("--embedding-dim", scorer.embedding_dim, "Token embedding size")->capture_default_str();
    g->add_option("--hidden-dim", scorer.hidden_dim, "LSTM state size per direction")->capture_default_str();
    g->add_option("--ff-dim", scorer.ff_hidden_dim, "Span scorer hidden size")->capture_default_str();
    g->add_option("--dropout", scorer.dropout, "Dropout rate")->capture_default_str();
    g->add_option("--max-positions", scorer.max_positions, "Position table size (embedding encoder)")
        ->capture_default_str();
  }
  ScorerConfig resolve(std::uint64_t seed) const {
    ScorerConfig c = scorer;
    c.encoder = parse_encoder_type(encoder);
    c.activation = parse_activation(activation);
    c.seed = seed;
    return c;
  }
};

struct TrainOptions {
  TrainConfig train;

  void add(CLI::App* app) {
    auto* g = app->add_option_group("Training");
    g->add_option("--epochs", train.epochs, "Maximum epochs")->capture_default_str();
    g->add_option("--batch-size", train.batch_size, "Sentences per update")->capture_default_str();
    g->add_option("--lr", train.learning_rate, "Adam learning rate")->capture_default_str();
    g->add_option("--patience", train.patience, "Evaluations without dev improvement before stopping")
        ->capture_default_str();
    g->add_option("--eval-every", train.eval_every, "Epochs between dev evaluations")->capture_default_str();
    g->add_option("--max-length", train.max_length, "Skip training sentences longer than this")
        ->capture_default_str();
    g->add_option("--clip-norm", train.clip_norm, "Gradient norm clip, 0 disables")->capture_default_str();
    g->add_option("--seed", train.seed, "Random seed")->capture_default_str();
  }
};

/// Documented here; the file itself is expanded into flags before parsing.
void add_config_option(CLI::App* sub) {
  sub->add_option("--config", "Flat key=value file of option defaults; explicit flags win")->configurable(false);
}

/// Replaces "--config FILE" with the file's key=value pairs as flags placed
/// right after the subcommand, so later command-line flags override them.
std::vector<std::string> expand_config(std::vector<std::string> args, const CLI::App& app) {
  std::size_t sub_pos = args.size();
  for (std::size_t i = 1; i < args.size(); ++i)
    if (app.get_subcommand_no_throw(args[i]) != nullptr) {
      sub_pos = i;
      break;
    }
  std::optional<std::string> file;
  for (std::size_t i = sub_pos; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file name");
      file = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!file) return args;
  std::ifstream in(*file);
  if (!in) throw UsageError("cannot open config file '" + *file + "'");
  std::vector<std::string> flags;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(*file + ": line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (value.empty()) continue;
    flags.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos + 1), flags.begin(), flags.end());
  return args;
}

Corpus take_first(Corpus c, std::size_t n) {
  if (n != 0 && c.size() > n) c.items.resize(n);
  return c;
}

EpochCallback epoch_logger() {
  return [](std::size_t epoch, double loss, std::optional<double> f1) {
    std::string line = "epoch " + std::to_string(epoch) + " loss " + std::to_string(loss);
    if (f1) line += " dev F1 " + std::to_string(*f1);
    log(line);
  };
}

// ---------------------------------------------------------------------------

struct TrainCommand {
  std::string train_file, dev_file, model_file, metrics_file, split, vocab_corpus, pretrained;
  std::size_t take = 0, vocab_size = 0;
  bool lenient = false;
  ModelOptions model;
  TrainOptions opts;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("train", "Train a parser on a bracketed treebank");
    sub->add_option("--train", train_file, "Training treebank")->required()->check(CLI::ExistingFile);
    sub->add_option("--dev", dev_file, "Development treebank for model selection")->check(CLI::ExistingFile);
    sub->add_option("--take-first", take, "Use only the first N trees of the training file (0 = all)");
    sub->add_option("--split", split, "Carve TRAIN/DEV trees from the training file, e.g. 10/5");
    sub->add_option("--model", model_file, "Output model file")->required();
    sub->add_option("--metrics", metrics_file, "Per-epoch metrics CSV");
    sub->add_option("--vocab-size", vocab_size, "Keep the N most frequent tokens (0 = all)")->capture_default_str();
    sub->add_option("--vocab-corpus", vocab_corpus, "Extra raw sentences for the vocabulary")
        ->check(CLI::ExistingFile);
    sub->add_option("--pretrained", pretrained, "Pretrained embeddings (token v1 v2 ...)")->check(CLI::ExistingFile);
    sub->add_flag("--lenient", lenient, "Skip malformed treebank lines with a warning");
    model.add(sub);
    opts.add(sub);
    add_config_option(sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    if (!split.empty() && !dev_file.empty()) throw UsageError("--split and --dev are mutually exclusive");
    if (split.empty() && dev_file.empty()) throw UsageError("train needs --dev or --split");
    Budget budget;
    if (!split.empty()) {
      try {
        budget = parse_budget(split);
      } catch (const Error& e) {
        throw UsageError(std::string("--split: ") + e.what());
      }
    }
    log_config(sub);
    auto warn = [](const std::string& w) { log("warning: " + w); };
    Corpus all = take_first(read_treebank(train_file, !lenient, warn), take);
    Corpus train_set, dev_set;
    if (!split.empty()) {
      std::tie(train_set, dev_set) = split_budget(all, budget);
    } else {
      train_set = std::move(all);
      dev_set = read_treebank(dev_file, !lenient, warn);
    }
    std::vector<Sentence> extra;
    if (!vocab_corpus.empty()) extra = read_sentences(vocab_corpus);
    const auto vocab = cell_vocabulary(train_set, extra, vocab_size);
    log("train " + std::to_string(train_set.size()) + " trees, dev " + std::to_string(dev_set.size()) +
        " trees, vocabulary " + std::to_string(vocab.size()));
    auto init = init_model(model.resolve(opts.train.seed), vocab,
                           pretrained.empty() ? std::nullopt : std::optional<std::string>(pretrained));
    auto result = train(std::move(init), train_set, dev_set, opts.train, {}, epoch_logger());
    save_model(result.model, model_file);
    if (!metrics_file.empty()) with_output(metrics_file, [&](std::ostream& o) { write_train_metrics(o, result.report); });
    log("best dev F1 " + std::to_string(result.report.best_dev_f1) + " at epoch " +
        std::to_string(result.report.best_epoch));
  }
};

struct AugmentCommand {
  std::string input, output;
  std::string policy = "original";
  AugmentConfig config;
  bool lenient = false;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("augment", "Grow a treebank by subtree substitution");
    sub->add_option("--input", input, "Input treebank")->required()->check(CLI::ExistingFile);
    sub->add_option("--output", output, "Output treebank ('-' for stdout)")->required();
    sub->add_option("--size", config.target_size, "Target number of trees")->capture_default_str();
    sub->add_option("--seed", config.seed, "Random seed")->capture_default_str();
    sub->add_option("--source-policy", policy, "Draw sources from the original or the growing set")
        ->check(CLI::IsMember({"original", "augmented"}))
        ->capture_default_str();
    sub->add_option("--max-length", config.max_length, "Reject generated sentences longer than this")
        ->capture_default_str();
    sub->add_flag("--lenient", lenient, "Skip malformed treebank lines with a warning");
    add_config_option(sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    log_config(sub);
    config.source_policy = parse_source_policy(policy);
    const auto base = read_treebank(input, !lenient, [](const std::string& w) { log("warning: " + w); });
    const auto out = augment_corpus(base, config);
    with_output(output, [&](std::ostream& o) { write_treebank(o, out); });
    log("wrote " + std::to_string(out.size()) + " trees (" + std::to_string(out.size() - base.size()) + " generated)");
  }
};

struct ParseCommand {
  std::string model_file, input, output = "-";

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("parse", "Parse raw sentences, one per line");
    sub->add_option("--model", model_file, "Model file")->required()->check(CLI::ExistingFile);
    sub->add_option("--input", input, "Whitespace-tokenized sentences")->required()->check(CLI::ExistingFile);
    sub->add_option("--output", output, "Output treebank ('-' for stdout)")->capture_default_str();
    add_config_option(sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    log_config(sub);
    const auto model = load_model(model_file);
    const auto sentences = read_sentences(input);
    const auto parsed = predict(model, sentences);
    with_output(output, [&](std::ostream& o) { write_treebank(o, parsed); });
  }
};

struct SelfTrainCommand {
  std::string model_file, pool_file, dev_pool_file, output, predictions, metrics_file;
  SelfTrainConfig config;
  TrainOptions opts;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("selftrain", "Iterative self-training on raw sentences");
    sub->add_option("--model", model_file, "Initial model")->required()->check(CLI::ExistingFile);
    sub->add_option("--pool", pool_file, "Raw sentences to relabel")->check(CLI::ExistingFile);
    sub->add_option("--dev-pool", dev_pool_file, "Raw sentences for model selection (default: pool tail)")
        ->check(CLI::ExistingFile);
    sub->add_option("--output", output, "Output model file")->required();
    sub->add_option("--steps", config.steps, "Self-training steps")->capture_default_str();
    sub->add_flag("--warm-start", config.warm_start, "Continue from the previous model instead of a fresh one");
    sub->add_option("--dev-fraction", config.dev_fraction, "Pool fraction held out when no dev pool is given")
        ->capture_default_str();
    sub->add_option("--predictions", predictions, "Directory for each step's predicted treebanks");
    sub->add_option("--metrics", metrics_file, "Per-step metrics CSV");
    opts.add(sub);
    add_config_option(sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    if (config.steps > 0 && pool_file.empty()) throw UsageError("selftrain with --steps > 0 needs --pool");
    log_config(sub);
    config.train = opts.train;
    if (!predictions.empty()) config.prediction_dir = predictions;
    const auto initial = load_model(model_file);
    std::vector<Sentence> pool, dev_pool;
    if (!pool_file.empty()) pool = read_sentences(pool_file);
    if (!dev_pool_file.empty()) dev_pool = read_sentences(dev_pool_file);
    const auto result = self_train(initial, pool, dev_pool, config, [](const SelfTrainStep& s) {
      log("step " + std::to_string(s.step) + ": " + std::to_string(s.report.epoch_loss.size()) + " epochs, dev F1 " +
          std::to_string(s.report.best_dev_f1) + ", fit F1 " + std::to_string(s.fit_f1));
    });
    save_model(result.model, output);
    if (!metrics_file.empty())
      with_output(metrics_file, [&](std::ostream& o) {
        o << "step,epochs,best_epoch,dev_f1,fit_f1,train_size,dev_size\n" << std::fixed << std::setprecision(4);
        for (const auto& s : result.steps)
          o << s.step << ',' << s.report.epoch_loss.size() << ',' << s.report.best_epoch << ','
            << s.report.best_dev_f1 << ',' << s.fit_f1 << ',' << s.train_size << ',' << s.dev_size << '\n';
      });
  }
};

struct EvaluateCommand {
  std::string gold_file, predicted_file, mode = "corpus", csv;
  EvalConfig config;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("evaluate", "Unlabeled bracketing precision, recall and F1");
    sub->add_option("--gold", gold_file, "Gold treebank")->required()->check(CLI::ExistingFile);
    sub->add_option("--predicted", predicted_file, "Predicted treebank")->required()->check(CLI::ExistingFile);
    sub->add_option("--mode", mode, "corpus (pooled counts) or sentence (mean of sentence F1)")
        ->check(CLI::IsMember({"corpus", "sentence"}))
        ->capture_default_str();
    sub->add_flag("--exclude-trivial", config.exclude_trivial, "Do not count the whole-sentence bracket");
    sub->add_option("--cutoff", config.max_length, "Only sentences up to this length (0 = all)")
        ->capture_default_str();
    sub->add_option("--csv", csv, "Per-sentence counts CSV");
    add_config_option(sub);
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    log_config(sub);
    config.mode = mode == "corpus" ? EvalMode::Corpus : EvalMode::SentenceMean;
    const auto result = score_corpus(read_treebank(gold_file), read_treebank(predicted_file), config);
    write_report(std::cout, result, config);
    if (!csv.empty()) with_output(csv, [&](std::ostream& o) { write_sentence_csv(o, result); });
  }
};

struct ExperimentCommand {
  std::string grid_file, output = "-", runs_file;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("experiment", "Run a grid of few-shot experiments over seeds");
    sub->add_option("grid", grid_file, "Grid file")->required()->check(CLI::ExistingFile);
    sub->add_option("--output", output, "Summary CSV: mean and stddev test F1 per cell ('-' for stdout)")
        ->capture_default_str();
    sub->add_option("--runs", runs_file, "Per-run CSV");
    sub->callback([this, sub] { run(*sub); });
  }

  void run(const CLI::App& sub) {
    const auto grid = read_grid(grid_file);
    log_config(sub);
    if (!g_quiet) {
      std::ifstream in(grid_file);
      std::cerr << "# grid\n" << in.rdbuf();
    }
    const auto data = load_data(grid);
    const auto runs = run_experiment(
        grid, data,
        [](const RunResult& r) {
          log("cell " + to_string(r.key.budget) + " augment " + std::to_string(r.key.augment) + " st " +
              std::to_string(r.key.st_steps) + " vocab " + std::to_string(r.key.vocab_size) + " seed " +
              std::to_string(r.seed) + ": test F1 " + std::to_string(r.test_f1));
        },
        [](const std::string& s) { log("  " + s); });
    with_output(output, [&](std::ostream& o) { write_summary_csv(o, summarize(runs)); });
    if (!runs_file.empty()) with_output(runs_file, [&](std::ostream& o) { write_runs_csv(o, runs); });
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot constituency parsing: train, augment, parse, self-train, evaluate"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_flag("-q,--quiet", g_quiet, "Only print results and errors");

  TrainCommand train_cmd;
  AugmentCommand augment_cmd;
  ParseCommand parse_cmd;
  SelfTrainCommand selftrain_cmd;
  EvaluateCommand evaluate_cmd;
  ExperimentCommand experiment_cmd;
  train_cmd.add(app);
  augment_cmd.add(app);
  parse_cmd.add(app);
  selftrain_cmd.add(app);
  evaluate_cmd.add(app);
  experiment_cmd.add(app);

  try {
    auto args = expand_config(std::vector<std::string>(argv, argv + argc), app);
    std::reverse(args.begin(), args.end());
    args.pop_back();  // program name
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
