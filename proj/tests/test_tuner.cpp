#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "attnlab/error.hpp"
#include "attnlab/tuner.hpp"
#include "reference.hpp"

using namespace attnlab;

namespace {

struct Data {
  Corpus train, valid, test;
};

const Data& synthetic() {
  static const Data data = [] {
    const std::string dir = std::string(ATTNLAB_DATA_DIR) + "/synthetic/";
    Data d;
    d.train = load_corpus(dir + "train.tsv");
    d.valid = load_corpus(dir + "valid.tsv", d.train.vocab, d.train.labels);
    d.test = load_corpus(dir + "test.tsv", d.train.vocab, d.train.labels);
    return d;
  }();
  return data;
}

TrialCorpora corpora() {
  const Data& d = synthetic();
  return {&d.train, &d.valid, &d.test};
}

TrainConfig quick() {
  TrainConfig c;
  c.max_epochs = 4;
  c.patience = 2;
  return c;
}

TuneOptions small_options() {
  TuneOptions o;
  o.arch = Arch::kCaml;
  o.embeddings = {std::nullopt, 8};
  return o;
}

TrialRecord record(std::size_t index, std::uint64_t seed, double valid, double test) {
  TrialRecord r;
  r.grid_index = index;
  r.hp = {50 + static_cast<int>(index), 2, 0.2, 0.001};
  r.seed = seed;
  r.best_valid = valid;
  r.test = MetricsReport{test, test, test, {{5, test}}};
  return r;
}

}  // namespace

TEST_CASE("default grid sizes and canonical order") {
  GridSpec spec;
  CHECK(spec.combinations() == 480);
  const auto grid = enumerate_grid(spec);
  REQUIRE(grid.size() == 480);
  CHECK(grid.front() == Hyperparams{50, 2, 0.2, 0.0003});
  CHECK(grid[1] == Hyperparams{50, 2, 0.2, 0.0001});
  CHECK(grid[4] == Hyperparams{50, 2, 0.4, 0.0003});
  CHECK(grid[16] == Hyperparams{50, 4, 0.2, 0.0003});
  CHECK(grid[80] == Hyperparams{150, 2, 0.2, 0.0003});
  CHECK(grid.back() == Hyperparams{550, 10, 0.8, 0.001});

  spec.d_c_values = {50, 150, 250, 350, 450, 550};
  spec.k_values = {2, 4, 6, 8, 10};
  spec.q_values = {0.2, 0.4, 0.6, 0.8};
  spec.eta_values = {0.0003};
  CHECK(enumerate_grid(spec).size() == 120);

  spec.eta_values.clear();
  CHECK_THROWS_AS(enumerate_grid(spec), Error);
}

TEST_CASE("mean and sample standard deviation") {
  const double v[] = {0.64, 0.65, 0.66, 0.64, 0.66};
  const MetricSummary s = mean_and_stddev(v);
  CHECK(std::abs(s.mean - 0.65) < 1e-12);
  CHECK(std::abs(s.stddev - 0.01) < 1e-12);
  const double one[] = {0.3};
  CHECK(mean_and_stddev(one).stddev == 0.0);
}

TEST_CASE("aggregate picks the top_m records per seed by validation score") {
  std::vector<TrialRecord> records;
  // seed 7: validation ranks grid 3 > 1 > 0 = 2 (tie goes to index 0)
  records.push_back(record(0, 7, 0.5, 0.10));
  records.push_back(record(1, 7, 0.6, 0.20));
  records.push_back(record(2, 7, 0.5, 0.30));
  records.push_back(record(3, 7, 0.9, 0.40));
  records.push_back(record(0, 3, 0.1, 0.70));
  records.push_back(record(1, 3, 0.2, 0.80));
  records.push_back(record(2, 3, 0.3, 0.90));
  TrialRecord failed = record(3, 3, 0.99, 0.0);
  failed.status = TrialStatus::kFailed;
  records.push_back(failed);

  const Summary s = aggregate(records, 3);
  REQUIRE(s.seeds.size() == 2);
  CHECK(s.seeds[0].seed == 3);
  CHECK(s.seeds[0].selected == std::vector<std::size_t>{2, 1, 0});
  CHECK(s.seeds[1].selected == std::vector<std::size_t>{3, 1, 0});
  CHECK(std::abs(s.seeds[1].micro_f1.mean - (0.4 + 0.2 + 0.1) / 3) < 1e-12);
  CHECK(std::abs(s.seeds[0].p_at_n.mean - 0.8) < 1e-12);
  CHECK(std::abs(s.seeds[0].p_at_n.stddev - 0.1) < 1e-12);
  CHECK(std::abs(s.mean_micro_f1 - (0.8 + 0.7 / 3) / 2) < 1e-12);

  CHECK_THROWS_WITH_AS(aggregate(records, 4), doctest::Contains("3"), Error);
  const std::string table = s.render("caml");
  CHECK(table.find("+/-") != std::string::npos);
}

TEST_CASE("aggregate is invariant to record order") {
  Rng rng(17);
  std::uniform_int_distribution<int> level(0, 20);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TrialRecord> records;
    for (std::uint64_t seed : {1337u, 1331u, 42u}) {
      for (std::size_t i = 0; i < 9; ++i) records.push_back(record(i, seed, level(rng) / 20.0, level(rng) / 20.0));
    }
    const Summary a = aggregate(records, 5);
    std::shuffle(records.begin(), records.end(), rng);
    const Summary b = aggregate(records, 5);
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(a.seeds[s].selected == b.seeds[s].selected);
      CHECK(a.seeds[s].micro_f1.mean == doctest::Approx(b.seeds[s].micro_f1.mean).epsilon(1e-14));
    }
  }
}

TEST_CASE("ledger round trip uses shortest round-trip doubles") {
  std::vector<TrialRecord> records{record(0, 1337, 0.1 + 0.2, 1.0 / 3.0), record(1, 42, 0.25, 2.0 / 7.0)};
  records[1].hp.eta = 0.0003;
  records[1].status = TrialStatus::kFailed;
  records[1].best_valid = std::nan("");
  std::ostringstream out;
  write_ledger_header(out, 5);
  for (const auto& r : records) write_ledger_row(out, r);
  CHECK(out.str().find("0.30000000000000004") != std::string::npos);

  std::istringstream in(out.str());
  const auto back = parse_ledger(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].best_valid == 0.1 + 0.2);
  CHECK(back[0].test.micro_f1 == 1.0 / 3.0);
  CHECK(back[0].test.precision_at(5) == 1.0 / 3.0);
  CHECK(back[1].hp == records[1].hp);
  CHECK(back[1].seed == 42);
  CHECK(back[1].status == TrialStatus::kFailed);
  CHECK(std::isnan(back[1].best_valid));

  std::ostringstream again;
  write_ledger_header(again, 5);
  for (const auto& r : back) write_ledger_row(again, r);
  CHECK(again.str() == out.str());
}

TEST_CASE("corrupt ledgers name the offending line") {
  std::ostringstream good;
  write_ledger_header(good, 5);
  write_ledger_row(good, record(0, 1, 0.5, 0.5));
  {
    std::istringstream in(good.str() + "50\t2\tzero\t0.1\t1\t0\t0\t0\t0\t0\tok\n");
    CHECK_THROWS_WITH_AS(parse_ledger(in), doctest::Contains("ledger line 3"), LedgerError);
  }
  {
    std::istringstream in(good.str() + "50\t2\n");
    CHECK_THROWS_WITH_AS(parse_ledger(in), doctest::Contains("ledger line 3"), LedgerError);
  }
  {
    std::istringstream in("not a header\n");
    CHECK_THROWS_WITH_AS(parse_ledger(in), doctest::Contains("ledger line 1"), LedgerError);
  }
  {
    std::istringstream in(good.str() + "50\t2\t0.2\t0.1\t1\t0\t0\t0\t0\t0\tmaybe\n");
    CHECK_THROWS_AS(parse_ledger(in), LedgerError);
  }
}

TEST_CASE("a singleton grid trial equals a standalone fit with the same seed") {
  const Hyperparams hp{6, 3, 0.2, 0.003};
  const TuneOptions options = small_options();
  const TrialRecord t = run_trial(hp, 0, 1331, corpora(), quick(), options);
  REQUIRE(t.status == TrialStatus::kOk);

  const Data& d = synthetic();
  TrainConfig config = quick();
  config.seed = 1331;
  Rng rng(1331);
  ModelParams model = build_model(Arch::kCaml, hp, d.train, options.embeddings, rng);
  const FitResult r = fit(model, hp, d.train.docs, d.valid.docs, d.train.num_labels(), config, rng);
  CHECK(t.best_valid == r.best_valid_score);
  const std::size_t ns[] = {5};
  const MetricsReport m = evaluate(
      {predict(round_to_float32(r.best), d.test), label_matrix(d.test.docs, d.train.num_labels())}, ns);
  CHECK(t.test.micro_f1 == m.micro_f1);
  CHECK(t.test.precision_at(5) == m.precision_at(5));
}

TEST_CASE("run_trials: canonical order, skip, worker count independence") {
  GridSpec spec;
  spec.d_c_values = {4, 6};
  spec.k_values = {2};
  spec.q_values = {0.2};
  spec.eta_values = {0.003, 0.001};
  spec.seeds = {1337, 42};
  const std::string dir = reference::temp_dir("tuner_ckpt");
  TuneOptions options = small_options();
  options.checkpoint_dir = dir;
  std::vector<std::pair<std::size_t, std::uint64_t>> published;
  options.on_complete = [&](const TrialRecord& r) { published.emplace_back(r.grid_index, r.seed); };

  const auto one = run_trials(spec, corpora(), quick(), options);
  REQUIRE(one.size() == 8);
  const std::vector<std::pair<std::size_t, std::uint64_t>> canonical{
      {0, 1337}, {0, 42}, {1, 1337}, {1, 42}, {2, 1337}, {2, 42}, {3, 1337}, {3, 42}};
  CHECK(published == canonical);
  for (const auto& r : one) {
    CHECK(r.status == TrialStatus::kOk);
    CHECK(std::filesystem::exists(r.checkpoint));
  }

  published.clear();
  options.workers = 3;
  const auto three = run_trials(spec, corpora(), quick(), options);
  CHECK(published == canonical);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(three[i].best_valid == one[i].best_valid);
    CHECK(three[i].test.micro_f1 == one[i].test.micro_f1);
  }

  published.clear();
  options.workers = 1;
  options.skip = [](const Hyperparams& hp, std::uint64_t seed) { return hp.d_c == 4 || seed == 42; };
  const auto rest = run_trials(spec, corpora(), quick(), options);
  REQUIRE(rest.size() == 2);
  CHECK(rest[0].grid_index == 2);
  CHECK(rest[1].grid_index == 3);
  CHECK(rest[0].best_valid == one[4].best_valid);
}

TEST_CASE("a failing trial is recorded, not thrown") {
  const Hyperparams hp{4, 30, 0.2, 0.001};  // wider than several documents under CNN
  TuneOptions options = small_options();
  options.arch = Arch::kCnn;
  const TrialRecord t = run_trial(hp, 0, 1, corpora(), quick(), options);
  CHECK(t.status == TrialStatus::kFailed);
  CHECK_FALSE(t.error.empty());
  CHECK(std::isnan(t.best_valid));
}
