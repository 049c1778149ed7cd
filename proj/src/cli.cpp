#include "attnlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <istream>
#include <memory>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "attnlab/corpus.hpp"
#include "attnlab/error.hpp"
#include "attnlab/metrics.hpp"
#include "attnlab/nn.hpp"
#include "attnlab/text.hpp"
#include "attnlab/trainer.hpp"
#include "attnlab/tuner.hpp"

namespace attnlab::cli {

namespace fs = std::filesystem;

Settings parse_settings(std::istream& in) {
  Settings settings;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected `key = value`");
    }
    const auto key = text::trim(body.substr(0, eq));
    if (key.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    settings[std::string(key)] = std::string(text::trim(body.substr(eq + 1)));
  }
  return settings;
}

Settings load_settings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return parse_settings(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_settings(const fs::path& path, const Settings& settings) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [key, value] : settings) out << key << " = " << value << '\n';
}

GridSpec grid_from_settings(const Settings& settings) {
  GridSpec spec;
  for (const auto& [key, value] : settings) {
    if (key == "dc" || key == "d_c") {
      spec.d_c_values = text::parse_list<int>(value, "d_c");
    } else if (key == "k") {
      spec.k_values = text::parse_list<int>(value, "k");
    } else if (key == "q") {
      spec.q_values = text::parse_list<double>(value, "q");
    } else if (key == "eta") {
      spec.eta_values = text::parse_list<double>(value, "eta");
    } else if (key == "seeds") {
      spec.seeds = text::parse_list<std::uint64_t>(value, "seed");
    } else if (key == "top_m") {
      spec.top_m = text::parse_number<std::size_t>(value, "top_m");
    } else {
      throw ParseError("grid: unknown key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

namespace {

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%H:%M:%S");
  return s.str();
}

// Hyperparameter defaults per architecture.
Settings hyperparam_defaults(Arch arch) {
  if (arch == Arch::kCnn) return {{"dc", "500"}, {"k", "4"}, {"q", "0.2"}, {"eta", "0.003"}};
  return {{"dc", "50"}, {"k", "10"}, {"q", "0.2"}, {"eta", "0.0001"}};
}

const Settings& common_defaults() {
  static const Settings defaults = {
      {"arch", "caml"},        {"seed", "1337"},     {"max_tokens", "2500"},
      {"batch_size", "16"},    {"patience", "10"},   {"max_epochs", "200"},
      {"val_metric", "p@5"},   {"embed_dim", "100"}, {"out", "out"},
      {"workers", "1"},        {"top_n", "5"},
  };
  return defaults;
}

// Flags registered on one subcommand, keyed by settings name.
struct FlagSet {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;

  void add(CLI::App* app, const std::string& key, const std::string& help) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    options[key] = app->add_option(flag, values[key], help);
  }
};

class Resolved {
 public:
  explicit Resolved(Settings s) : s_(std::move(s)) {}

  bool has(const std::string& key) const { return s_.count(key) && !s_.at(key).empty(); }
  const std::string& str(const std::string& key) const {
    auto it = s_.find(key);
    if (it == s_.end() || it->second.empty()) throw Error("missing required option --" + flag(key));
    return it->second;
  }
  template <typename T>
  T num(const std::string& key) const {
    try {
      return text::parse_number<T>(str(key), key);
    } catch (const ParseError& e) {
      throw Error(std::string("option --") + flag(key) + ": " + e.what());
    }
  }
  fs::path existing_file(const std::string& key) const {
    fs::path p = str(key);
    if (!fs::is_regular_file(p)) throw IoError("--" + flag(key) + ": no such file " + p.string());
    return p;
  }
  const Settings& all() const { return s_; }

 private:
  static std::string flag(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
  }
  Settings s_;
};

// defaults < config file < explicit flags
Resolved resolve(const FlagSet& flags, const std::vector<std::string>& keys) {
  Settings file;
  if (!flags.config_path.empty()) file = load_settings(flags.config_path);
  Settings merged;
  auto pick = [&](const std::string& key) -> std::optional<std::string> {
    auto opt = flags.options.find(key);
    if (opt != flags.options.end() && opt->second->count() > 0) return flags.values.at(key);
    if (auto it = file.find(key); it != file.end()) return it->second;
    return std::nullopt;
  };
  const Arch arch = parse_arch(pick("arch").value_or(common_defaults().at("arch")));
  const Settings hp_defaults = hyperparam_defaults(arch);
  for (const auto& key : keys) {
    if (auto v = pick(key)) {
      merged[key] = *v;
    } else if (auto it = hp_defaults.find(key); it != hp_defaults.end()) {
      merged[key] = it->second;
    } else if (auto it2 = common_defaults().find(key); it2 != common_defaults().end()) {
      merged[key] = it2->second;
    }
  }
  return Resolved(std::move(merged));
}

std::size_t parse_val_metric(const std::string& value) {
  std::string_view v = value;
  if (v.size() < 3 || (v[0] != 'p' && v[0] != 'P') || v[1] != '@') {
    throw Error("--val-metric must look like p@N, got '" + value + "'");
  }
  return text::parse_number<std::size_t>(v.substr(2), "val-metric n");
}

TrainConfig train_config(const Resolved& r) {
  TrainConfig config;
  config.batch_size = r.num<std::size_t>("batch_size");
  config.max_epochs = r.num<std::size_t>("max_epochs");
  config.patience = r.num<std::size_t>("patience");
  config.val_top_n = parse_val_metric(r.str("val_metric"));
  config.seed = r.num<std::uint64_t>("seed");
  config.validate();
  return config;
}

Hyperparams hyperparams(const Resolved& r) {
  Hyperparams hp{r.num<int>("dc"), r.num<int>("k"), r.num<double>("q"), r.num<double>("eta")};
  hp.validate();
  return hp;
}

EmbeddingSource embedding_source(const Resolved& r) {
  EmbeddingSource src;
  if (r.has("embeddings")) src.pretrained = r.existing_file("embeddings");
  src.dim = r.num<std::size_t>("embed_dim");
  return src;
}

struct Corpora {
  Corpus train;
  Corpus valid;
  std::optional<Corpus> test;
};

Corpora load_corpora(const Resolved& r, bool need_test) {
  const auto max_tokens = r.num<std::size_t>("max_tokens");
  const fs::path train_path = r.existing_file("train");
  const fs::path valid_path = r.existing_file("valid");
  std::optional<fs::path> test_path;
  if (need_test || r.has("test")) test_path = r.existing_file("test");

  Corpora c{load_corpus(train_path, max_tokens), {}, std::nullopt};
  c.valid = load_corpus(valid_path, c.train.vocab, c.train.labels, max_tokens);
  if (test_path) c.test = load_corpus(*test_path, c.train.vocab, c.train.labels, max_tokens);
  return c;
}

std::vector<std::size_t> report_ns(std::size_t num_labels, std::size_t val_n) {
  std::set<std::size_t> ns{1, 5, 8, val_n};
  std::vector<std::size_t> out;
  for (std::size_t n : ns) {
    if (n >= 1 && n <= num_labels) out.push_back(n);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << body;
}

const std::vector<std::string> kTrainKeys = {
    "train",      "valid",    "test",       "embeddings", "embed_dim", "arch",
    "dc",         "k",        "q",          "eta",        "seed",      "max_tokens",
    "batch_size", "patience", "max_epochs", "val_metric", "out"};

int cmd_train(const FlagSet& flags, std::ostream& out, std::ostream& err) {
  const Resolved r = resolve(flags, kTrainKeys);
  const Arch arch = parse_arch(r.str("arch"));
  const Hyperparams hp = hyperparams(r);
  const TrainConfig config = train_config(r);
  const EmbeddingSource embeddings = embedding_source(r);
  Corpora data = load_corpora(r, false);

  const fs::path dir = r.str("out");
  fs::create_directories(dir);
  write_settings(dir / "config.resolved", r.all());

  Rng rng(config.seed);
  ModelParams model = build_model(arch, hp, data.train, embeddings, rng);
  err << "[" << timestamp() << "] training " << arch_name(arch) << " on " << data.train.docs.size()
      << " documents, L=" << data.train.num_labels() << ", V=" << data.train.vocab.size() << "\n";
  FitResult result = fit(std::move(model), hp, data.train.docs, data.valid.docs,
                         data.train.num_labels(), config, rng, [&](const EpochRecord& e, const ModelParams&) {
                           err << "[" << timestamp() << "] epoch " << e.epoch << " loss "
                               << e.train_loss << " valid p@" << config.val_top_n << " "
                               << e.valid_score << (e.is_best ? " *" : "") << "\n";
                         });

  const ModelParams best = round_to_float32(result.best);
  save_checkpoint(dir / "checkpoint.bin", best);
  write_history(dir / "history.tsv", result.history, config.val_top_n);
  save_vocabulary(dir / "vocab.tsv", data.train.vocab);
  save_labels(dir / "labels.tsv", data.train.labels);
  out << "best epoch " << result.best_epoch << " of " << result.history.size() << ", valid p@"
      << config.val_top_n << " " << text::shortest(result.best_valid_score) << "\n";

  if (data.test) {
    const auto ns = report_ns(data.train.num_labels(), config.val_top_n);
    const MetricsReport report = evaluate(
        PredictionSet{predict(best, *data.test), label_matrix(data.test->docs, data.train.num_labels())},
        ns);
    write_text(dir / "test_metrics.tsv", report.to_tsv());
    out << report.to_tsv();
  }
  return kOk;
}

const std::vector<std::string> kTuneKeys = [] {
  auto keys = kTrainKeys;
  keys.insert(keys.end(), {"grid", "workers"});
  return keys;
}();

std::string describe(const Hyperparams& hp) {
  return "d_c=" + std::to_string(hp.d_c) + " k=" + std::to_string(hp.k) + " q=" + text::shortest(hp.q) +
         " eta=" + text::shortest(hp.eta);
}

int cmd_tune(const FlagSet& flags, bool dry_run, std::ostream& out, std::ostream& err) {
  const Resolved r = resolve(flags, kTuneKeys);
  const Arch arch = parse_arch(r.str("arch"));
  const GridSpec spec = r.has("grid") ? grid_from_settings(load_settings(r.existing_file("grid")))
                                      : GridSpec{};
  const std::vector<Hyperparams> grid = enumerate_grid(spec);
  out << "planned " << grid.size() << " hyperparameter combinations x " << spec.seeds.size()
      << " seeds = " << grid.size() * spec.seeds.size() << " trials\n";
  if (dry_run) return kOk;

  const TrainConfig config = train_config(r);
  TuneOptions options;
  options.arch = arch;
  options.embeddings = embedding_source(r);
  options.workers = r.num<std::size_t>("workers");
  Corpora data = load_corpora(r, true);

  const fs::path dir = r.str("out");
  options.checkpoint_dir = dir / "trials";
  fs::create_directories(options.checkpoint_dir);
  write_settings(dir / "config.resolved", r.all());
  save_vocabulary(dir / "vocab.tsv", data.train.vocab);
  save_labels(dir / "labels.tsv", data.train.labels);

  const fs::path ledger_path = dir / "ledger.tsv";
  std::set<std::tuple<int, int, double, double, std::uint64_t>> finished;
  if (fs::exists(ledger_path)) {
    std::ifstream in(ledger_path);
    for (const TrialRecord& rec : parse_ledger(in)) {
      finished.emplace(rec.hp.d_c, rec.hp.k, rec.hp.q, rec.hp.eta, rec.seed);
    }
  } else {
    std::ofstream header(ledger_path, std::ios::binary);
    write_ledger_header(header, config.val_top_n);
  }
  if (!finished.empty()) out << "resuming: " << finished.size() << " trials already in the ledger\n";

  std::ofstream ledger(ledger_path, std::ios::binary | std::ios::app);
  if (!ledger) throw IoError("cannot append to " + ledger_path.string());
  options.skip = [&](const Hyperparams& hp, std::uint64_t seed) {
    return finished.count({hp.d_c, hp.k, hp.q, hp.eta, seed}) > 0;
  };
  options.on_complete = [&](const TrialRecord& rec) {
    write_ledger_row(ledger, rec);
    ledger.flush();
    err << "[" << timestamp() << "] trial " << describe(rec.hp) << " seed " << rec.seed << ": "
        << (rec.status == TrialStatus::kOk ? "valid p@" + std::to_string(config.val_top_n) + " " +
                                                 text::shortest(rec.best_valid)
                                           : "FAILED (" + rec.error + ")")
        << " in " << std::fixed << std::setprecision(1) << rec.wall_seconds << "s\n"
        << std::defaultfloat;
  };
  const TrialCorpora corpora{&data.train, &data.valid, &*data.test};
  const auto ran = run_trials(spec, corpora, config, options);
  ledger.close();
  out << "ran " << ran.size() << " trials\n";

  // Aggregate from the ledger so a resumed run summarizes every trial.
  std::vector<TrialRecord> records;
  {
    std::ifstream in(ledger_path);
    records = parse_ledger(in);
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = std::find(grid.begin(), grid.end(), records[i].hp);
    records[i].grid_index = it != grid.end() ? static_cast<std::size_t>(it - grid.begin()) : grid.size() + i;
  }
  const Summary summary = aggregate(records, spec.top_m, config.val_top_n);
  std::string body = summary.render(arch_name(arch));
  for (const SeedSummary& s : summary.seeds) {
    body += "seed " + std::to_string(s.seed) + " selected:";
    for (std::size_t index : s.selected) {
      body += index < grid.size() ? " [" + describe(grid[index]) + "]" : " [outside grid]";
    }
    body += "\n";
  }
  write_text(dir / "summary.txt", body);
  out << body;
  return kOk;
}

struct LoadedModel {
  ModelParams params;
  Corpus data;
};

LoadedModel load_for_inference(const Resolved& r) {
  const fs::path checkpoint =
      r.has("checkpoint") ? fs::path(r.str("checkpoint")) : fs::path(r.str("out")) / "checkpoint.bin";
  if (!fs::is_regular_file(checkpoint)) throw IoError("no such checkpoint " + checkpoint.string());
  const fs::path dir = checkpoint.parent_path().empty() ? fs::path(".") : checkpoint.parent_path();
  for (const char* name : {"vocab.tsv", "labels.tsv"}) {
    if (!fs::is_regular_file(dir / name)) {
      throw IoError("missing " + (dir / name).string() + " next to the checkpoint");
    }
  }
  const Vocabulary vocab = load_vocabulary(dir / "vocab.tsv");
  const LabelSpace labels = load_labels(dir / "labels.tsv");
  LoadedModel m{load_checkpoint(checkpoint), {}};
  m.data = load_corpus(r.existing_file("test"), vocab, labels, r.num<std::size_t>("max_tokens"));
  return m;
}

int cmd_evaluate(const FlagSet& flags, std::ostream& out) {
  const Resolved r = resolve(flags, {"checkpoint", "test", "max_tokens", "val_metric", "out"});
  const LoadedModel m = load_for_inference(r);
  const Matrix probs = predict(m.params, m.data);
  const auto ns = report_ns(m.data.num_labels(), parse_val_metric(r.str("val_metric")));
  out << evaluate(PredictionSet{probs, label_matrix(m.data.docs, m.data.num_labels())}, ns).to_tsv();
  return kOk;
}

int cmd_predict(const FlagSet& flags, std::ostream& out) {
  const Resolved r = resolve(flags, {"checkpoint", "test", "max_tokens", "top_n", "out"});
  const LoadedModel m = load_for_inference(r);
  const auto top_n = r.num<std::size_t>("top_n");
  if (top_n < 1 || top_n > m.data.num_labels()) {
    throw Error("--top-n must lie in [1, " + std::to_string(m.data.num_labels()) + "]");
  }
  const Matrix probs = predict(m.params, m.data);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(probs.cols()));
  char buf[64];
  for (std::size_t i = 0; i < m.data.docs.size(); ++i) {
    const auto row = probs.row(static_cast<Eigen::Index>(i));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return row(a) > row(b); });
    out << m.data.docs[i].id;
    for (std::size_t j = 0; j < top_n; ++j) {
      std::snprintf(buf, sizeof buf, "\t%.6f", row(order[j]));
      out << '\t' << m.data.labels.name(static_cast<LabelId>(order[j])) << buf;
    }
    out << '\n';
  }
  return kOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train, tune, evaluate and apply CNN / CAML multi-label text classifiers", "attnlab"};
  app.require_subcommand(1);

  auto common = [](CLI::App* sub, FlagSet& f) {
    sub->add_option("--config", f.config_path, "flat key = value file; flags override it");
  };
  auto add_training_flags = [](CLI::App* sub, FlagSet& f) {
    f.add(sub, "train", "training corpus TSV");
    f.add(sub, "valid", "validation corpus TSV");
    f.add(sub, "test", "test corpus TSV");
    f.add(sub, "embeddings", "pretrained embeddings (`V d` header)");
    f.add(sub, "embed_dim", "embedding size without --embeddings (default 100)");
    f.add(sub, "arch", "cnn | caml (default caml)");
    f.add(sub, "dc", "number of filters");
    f.add(sub, "k", "filter size");
    f.add(sub, "q", "dropout probability");
    f.add(sub, "eta", "learning rate");
    f.add(sub, "seed", "random seed (default 1337)");
    f.add(sub, "max_tokens", "truncation length (default 2500)");
    f.add(sub, "batch_size", "training batch size (default 16)");
    f.add(sub, "patience", "early-stopping patience in epochs (default 10)");
    f.add(sub, "max_epochs", "epoch cap (default 200)");
    f.add(sub, "val_metric", "validation metric p@N (default p@5)");
    f.add(sub, "out", "output directory (default out)");
  };

  FlagSet train_flags, tune_flags, eval_flags, predict_flags;
  bool dry_run = false;

  CLI::App* train = app.add_subcommand("train", "train one model with early stopping");
  common(train, train_flags);
  add_training_flags(train, train_flags);

  CLI::App* tune = app.add_subcommand("tune", "grid search over (d_c, k, q, eta) and seeds");
  common(tune, tune_flags);
  add_training_flags(tune, tune_flags);
  tune_flags.add(tune, "grid", "grid file (dc, k, q, eta, seeds, top_m)");
  tune_flags.add(tune, "workers", "parallel trials (default 1)");
  tune->add_flag("--dry-run", dry_run, "report the planned trials and exit");

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint on a labeled corpus");
  common(evaluate_cmd, eval_flags);
  eval_flags.add(evaluate_cmd, "checkpoint", "checkpoint path (default <out>/checkpoint.bin)");
  eval_flags.add(evaluate_cmd, "test", "labeled corpus TSV");
  eval_flags.add(evaluate_cmd, "max_tokens", "truncation length (default 2500)");
  eval_flags.add(evaluate_cmd, "val_metric", "extra p@N to report (default p@5)");
  eval_flags.add(evaluate_cmd, "out", "directory holding checkpoint.bin (default out)");

  CLI::App* predict_cmd = app.add_subcommand("predict", "write the top-n labels per document");
  common(predict_cmd, predict_flags);
  predict_flags.add(predict_cmd, "checkpoint", "checkpoint path (default <out>/checkpoint.bin)");
  predict_flags.add(predict_cmd, "test", "corpus TSV (labels field may be empty)");
  predict_flags.add(predict_cmd, "max_tokens", "truncation length (default 2500)");
  predict_flags.add(predict_cmd, "top_n", "labels per document (default 5)");
  predict_flags.add(predict_cmd, "out", "directory holding checkpoint.bin (default out)");

  std::vector<const char*> argv{"attnlab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (train->parsed()) return cmd_train(train_flags, out, err);
    if (tune->parsed()) return cmd_tune(tune_flags, dry_run, out, err);
    if (evaluate_cmd->parsed()) return cmd_evaluate(eval_flags, out);
    if (predict_cmd->parsed()) return cmd_predict(predict_flags, out);
  } catch (const NonFiniteError& e) {
    err << "error: " << e.what() << "\n";
    return kNonFiniteLoss;
  } catch (const LedgerError& e) {
    err << "error: " << e.what() << "\n";
    return kCorruptLedger;
  } catch (const VocabularyMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kVocabularyMismatch;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kMissingFile;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace attnlab::cli
