#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnlab/error.hpp"
#include "attnlab/metrics.hpp"
#include "attnlab/nn.hpp"
#include "attnlab/trainer.hpp"

namespace attnlab {

struct GridSpec {
  std::vector<int> d_c_values{50, 150, 250, 350, 450, 550};
  std::vector<int> k_values{2, 4, 6, 8, 10};
  std::vector<double> q_values{0.2, 0.4, 0.6, 0.8};
  std::vector<double> eta_values{0.0003, 0.0001, 0.003, 0.001};
  std::vector<std::uint64_t> seeds{1337, 1331, 42};
  std::size_t top_m = 5;

  void validate() const;
  std::size_t combinations() const;
};

// Cartesian product, d_c outermost, then k, q, eta.
std::vector<Hyperparams> enumerate_grid(const GridSpec& spec);

enum class TrialStatus { kOk, kFailed };

struct TrialRecord {
  std::size_t grid_index = 0;  // position in enumerate_grid order
  Hyperparams hp;
  std::uint64_t seed = 0;
  double best_valid = 0.0;  // best validation P@n
  MetricsReport test;
  std::filesystem::path checkpoint;
  double wall_seconds = 0.0;
  TrialStatus status = TrialStatus::kOk;
  std::string error;
};

struct TrialCorpora {
  const Corpus* train = nullptr;
  const Corpus* valid = nullptr;
  const Corpus* test = nullptr;
};

struct TuneOptions {
  Arch arch = Arch::kCaml;
  EmbeddingSource embeddings;
  std::size_t workers = 1;
  // When set, each trial's best checkpoint is written here.
  std::filesystem::path checkpoint_dir;
  // Called under a lock, in canonical (hyperparams, seed) order.
  std::function<void(const TrialRecord&)> on_complete;
  // Trials for which this returns true are not run.
  std::function<bool(const Hyperparams&, std::uint64_t seed)> skip;
};

// Trains one (hyperparams, seed) trial and scores its best checkpoint (after
// the float32 round trip) on the test corpus.
TrialRecord run_trial(const Hyperparams& hp, std::size_t grid_index, std::uint64_t seed,
                      const TrialCorpora& corpora, const TrainConfig& base, const TuneOptions& options);

// One fit per (hyperparams, seed); records come back in canonical order
// (grid-major, seeds in spec order) whatever the worker count.
std::vector<TrialRecord> run_trials(const GridSpec& spec, const TrialCorpora& corpora,
                                    const TrainConfig& base, const TuneOptions& options);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1)
};

struct SeedSummary {
  std::uint64_t seed = 0;
  std::vector<std::size_t> selected;  // grid indices of the top_m records
  MetricSummary macro_f1_standard;
  MetricSummary macro_f1_of_means;
  MetricSummary micro_f1;
  MetricSummary p_at_n;
};

struct Summary {
  std::size_t top_n = 5;
  std::vector<SeedSummary> seeds;  // ascending seed
  double mean_macro_f1_standard = 0.0;
  double mean_macro_f1_of_means = 0.0;
  double mean_micro_f1 = 0.0;
  double mean_p_at_n = 0.0;

  std::string render(std::string_view arch) const;
};

MetricSummary mean_and_stddev(std::span<const double> values);

// Per seed: the top_m successful records by validation score (ties to the
// lower grid index), then mean and sample std of their test metrics.
Summary aggregate(std::span<const TrialRecord> records, std::size_t top_m, std::size_t top_n = 5);

// Trial ledger TSV. write_ledger_header emits the column line; parse_ledger
// skips it and throws LedgerError naming the first corrupt line.
class LedgerError : public ParseError {
 public:
  using ParseError::ParseError;
};
void write_ledger_header(std::ostream& out, std::size_t top_n);
void write_ledger_row(std::ostream& out, const TrialRecord& record);
std::vector<TrialRecord> parse_ledger(std::istream& in);

}  // namespace attnlab
