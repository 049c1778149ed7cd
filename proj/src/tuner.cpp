#include "attnlab/tuner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include "attnlab/text.hpp"

namespace attnlab {

void GridSpec::validate() const {
  if (d_c_values.empty() || k_values.empty() || q_values.empty() || eta_values.empty() ||
      seeds.empty()) {
    throw Error("grid spec: every value list must be non-empty");
  }
  if (top_m < 1) throw Error("grid spec: top_m must be >= 1");
}

std::size_t GridSpec::combinations() const {
  return d_c_values.size() * k_values.size() * q_values.size() * eta_values.size();
}

std::vector<Hyperparams> enumerate_grid(const GridSpec& spec) {
  spec.validate();
  std::vector<Hyperparams> grid;
  grid.reserve(spec.combinations());
  for (int d_c : spec.d_c_values)
    for (int k : spec.k_values)
      for (double q : spec.q_values)
        for (double eta : spec.eta_values) {
          Hyperparams hp{d_c, k, q, eta};
          hp.validate();
          grid.push_back(hp);
        }
  return grid;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string checkpoint_name(const Hyperparams& hp, std::uint64_t seed) {
  return "trial_dc" + std::to_string(hp.d_c) + "_k" + std::to_string(hp.k) + "_q" +
         text::shortest(hp.q) + "_eta" + text::shortest(hp.eta) + "_seed" + std::to_string(seed) +
         ".bin";
}

}  // namespace

TrialRecord run_trial(const Hyperparams& hp, std::size_t grid_index, std::uint64_t seed,
                      const TrialCorpora& corpora, const TrainConfig& base,
                      const TuneOptions& options) {
  TrialRecord rec;
  rec.grid_index = grid_index;
  rec.hp = hp;
  rec.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (!corpora.train || !corpora.valid || !corpora.test) throw Error("trial needs train, valid and test corpora");
    TrainConfig config = base;
    config.seed = seed;
    Rng rng(seed);
    const Corpus& train = *corpora.train;
    ModelParams model = build_model(options.arch, hp, train, options.embeddings, rng);
    FitResult result = fit(std::move(model), hp, train.docs, corpora.valid->docs, train.num_labels(),
                           config, rng);
    const ModelParams best = round_to_float32(result.best);
    rec.best_valid = result.best_valid_score;
    const std::size_t ns[] = {config.val_top_n};
    rec.test = evaluate(PredictionSet{predict(best, *corpora.test),
                                      label_matrix(corpora.test->docs, train.num_labels())},
                        ns);
    if (!options.checkpoint_dir.empty()) {
      rec.checkpoint = options.checkpoint_dir / checkpoint_name(hp, seed);
      save_checkpoint(rec.checkpoint, best);
    }
  } catch (const std::exception& e) {
    rec.status = TrialStatus::kFailed;
    rec.error = e.what();
    rec.best_valid = kNaN;
    rec.test = MetricsReport{kNaN, kNaN, kNaN, {{base.val_top_n, kNaN}}};
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<TrialRecord> run_trials(const GridSpec& spec, const TrialCorpora& corpora,
                                    const TrainConfig& base, const TuneOptions& options) {
  const std::vector<Hyperparams> grid = enumerate_grid(spec);
  struct Job {
    std::size_t grid_index;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::uint64_t seed : spec.seeds) {
      if (options.skip && options.skip(grid[i], seed)) continue;
      jobs.push_back({i, seed});
    }
  }

  std::vector<std::optional<TrialRecord>> done(jobs.size());
  std::mutex mu;
  std::size_t frontier = 0;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      TrialRecord rec = run_trial(grid[jobs[j].grid_index], jobs[j].grid_index, jobs[j].seed,
                                  corpora, base, options);
      std::lock_guard lock(mu);
      done[j] = std::move(rec);
      // Publish strictly in canonical order.
      while (frontier < done.size() && done[frontier]) {
        if (options.on_complete) options.on_complete(*done[frontier]);
        ++frontier;
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(options.workers, 1, std::max<std::size_t>(jobs.size(), 1));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<TrialRecord> records;
  records.reserve(done.size());
  for (auto& r : done) records.push_back(std::move(*r));
  return records;
}

MetricSummary mean_and_stddev(std::span<const double> values) {
  if (values.empty()) throw Error("mean_and_stddev: no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) return {mean, 0.0};
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size() - 1))};
}

Summary aggregate(std::span<const TrialRecord> records, std::size_t top_m, std::size_t top_n) {
  if (top_m < 1) throw Error("aggregate: top_m must be >= 1");
  std::map<std::uint64_t, std::vector<const TrialRecord*>> by_seed;
  for (const TrialRecord& r : records) {
    auto& bucket = by_seed[r.seed];
    if (r.status == TrialStatus::kOk) bucket.push_back(&r);
  }

  Summary summary;
  summary.top_n = top_n;
  for (auto& [seed, bucket] : by_seed) {
    if (bucket.size() < top_m) {
      throw Error("seed " + std::to_string(seed) + " has " + std::to_string(bucket.size()) +
                  " successful trials, fewer than top_m = " + std::to_string(top_m));
    }
    std::sort(bucket.begin(), bucket.end(), [](const TrialRecord* a, const TrialRecord* b) {
      if (a->best_valid != b->best_valid) return a->best_valid > b->best_valid;
      if (a->grid_index != b->grid_index) return a->grid_index < b->grid_index;
      return a->hp.eta < b->hp.eta;
    });
    SeedSummary s;
    s.seed = seed;
    std::vector<double> macro_std, macro_means, micro, p;
    for (std::size_t i = 0; i < top_m; ++i) {
      const TrialRecord& r = *bucket[i];
      s.selected.push_back(r.grid_index);
      macro_std.push_back(r.test.macro_f1_standard);
      macro_means.push_back(r.test.macro_f1_of_means);
      micro.push_back(r.test.micro_f1);
      p.push_back(r.test.precision_at(top_n));
    }
    s.macro_f1_standard = mean_and_stddev(macro_std);
    s.macro_f1_of_means = mean_and_stddev(macro_means);
    s.micro_f1 = mean_and_stddev(micro);
    s.p_at_n = mean_and_stddev(p);
    summary.seeds.push_back(std::move(s));
  }
  if (summary.seeds.empty()) throw Error("aggregate: no trial records");

  const auto count = static_cast<double>(summary.seeds.size());
  for (const SeedSummary& s : summary.seeds) {
    summary.mean_macro_f1_standard += s.macro_f1_standard.mean / count;
    summary.mean_macro_f1_of_means += s.macro_f1_of_means.mean / count;
    summary.mean_micro_f1 += s.micro_f1.mean / count;
    summary.mean_p_at_n += s.p_at_n.mean / count;
  }
  return summary;
}

std::string Summary::render(std::string_view arch) const {
  const std::string p_header = "P@" + std::to_string(top_n);
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-6s %-8s %-17s %-17s %-17s %-17s\n", "model", "seed",
                "Macro-F1(std)", "Macro-F1(means)", "Micro-F1", p_header.c_str());
  out += buf;
  auto cell = [](const MetricSummary& m) {
    char c[64];
    std::snprintf(c, sizeof c, "%.4f +/- %.4f", m.mean, m.stddev);
    return std::string(c);
  };
  bool first = true;
  for (const SeedSummary& s : seeds) {
    std::snprintf(buf, sizeof buf, "%-6s %-8llu %-17s %-17s %-17s %-17s\n",
                  first ? std::string(arch).c_str() : "", static_cast<unsigned long long>(s.seed),
                  cell(s.macro_f1_standard).c_str(), cell(s.macro_f1_of_means).c_str(),
                  cell(s.micro_f1).c_str(), cell(s.p_at_n).c_str());
    out += buf;
    first = false;
  }
  std::snprintf(buf, sizeof buf, "%-6s %-8s %-17.4f %-17.4f %-17.4f %-17.4f\n", "", "mean",
                mean_macro_f1_standard, mean_macro_f1_of_means, mean_micro_f1, mean_p_at_n);
  out += buf;
  out += "(+/- is the sample standard deviation over the top-" +
         std::to_string(seeds.empty() ? 0 : seeds.front().selected.size()) +
         " trials of each seed, ranked by validation " + p_header + ")\n";
  return out;
}

void write_ledger_header(std::ostream& out, std::size_t top_n) {
  const std::string p = "p@" + std::to_string(top_n);
  out << "d_c\tk\tq\teta\tseed\tbest_valid_" << p
      << "\ttest_micro_f1\ttest_macro_f1_standard\ttest_macro_f1_of_means\ttest_" << p
      << "\tstatus\n";
}

void write_ledger_row(std::ostream& out, const TrialRecord& r) {
  const double p = r.test.p_at_n.empty() ? kNaN : r.test.p_at_n.front().second;
  out << r.hp.d_c << '\t' << r.hp.k << '\t' << text::shortest(r.hp.q) << '\t'
      << text::shortest(r.hp.eta) << '\t' << r.seed << '\t' << text::shortest(r.best_valid) << '\t'
      << text::shortest(r.test.micro_f1) << '\t' << text::shortest(r.test.macro_f1_standard) << '\t'
      << text::shortest(r.test.macro_f1_of_means) << '\t' << text::shortest(p) << '\t'
      << (r.status == TrialStatus::kOk ? "ok" : "failed") << '\n';
}

std::vector<TrialRecord> parse_ledger(std::istream& in) {
  std::vector<TrialRecord> records;
  std::string line;
  std::size_t line_no = 0;
  std::size_t top_n = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = text::split(line, '\t');
    auto fail = [&](const std::string& why) -> LedgerError {
      return LedgerError("ledger line " + std::to_string(line_no) + ": " + why);
    };
    if (line_no == 1) {
      constexpr std::string_view prefix = "test_p@";
      if (fields.size() != 11 || fields[0] != "d_c" || !fields[9].starts_with(prefix)) {
        throw fail("missing or malformed header");
      }
      try {
        top_n = text::parse_number<std::size_t>(fields[9].substr(prefix.size()), "n");
      } catch (const ParseError& e) {
        throw fail(e.what());
      }
      continue;
    }
    if (fields.size() != 11) throw fail("expected 11 fields, got " + std::to_string(fields.size()));
    TrialRecord r;
    try {
      r.hp.d_c = text::parse_number<int>(fields[0], "d_c");
      r.hp.k = text::parse_number<int>(fields[1], "k");
      r.hp.q = text::parse_number<double>(fields[2], "q");
      r.hp.eta = text::parse_number<double>(fields[3], "eta");
      r.seed = text::parse_number<std::uint64_t>(fields[4], "seed");
      r.best_valid = text::parse_number<double>(fields[5], "validation score");
      r.test.micro_f1 = text::parse_number<double>(fields[6], "micro_f1");
      r.test.macro_f1_standard = text::parse_number<double>(fields[7], "macro_f1_standard");
      r.test.macro_f1_of_means = text::parse_number<double>(fields[8], "macro_f1_of_means");
      r.test.p_at_n = {{top_n, text::parse_number<double>(fields[9], "precision")}};
    } catch (const ParseError& e) {
      throw fail(e.what());
    }
    if (fields[10] == "ok") {
      r.status = TrialStatus::kOk;
    } else if (fields[10] == "failed") {
      r.status = TrialStatus::kFailed;
    } else {
      throw fail("unknown status '" + std::string(fields[10]) + "'");
    }
    r.grid_index = records.size();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace attnlab
