#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "attnlab/corpus.hpp"
#include "attnlab/nn.hpp"

namespace attnlab {

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::size_t val_top_n = 5;  // validation metric is P@val_top_n
  std::uint64_t seed = 1337;
  AdamSettings adam;

  void validate() const;
};

struct OptimizerState {
  ModelParams first_moment;
  ModelParams second_moment;
  std::uint64_t step = 0;

  static OptimizerState fresh(const ModelShape& shape);
};

// Bias-corrected Adam without weight decay. Re-zeroes the PAD embedding row.
// Throws NonFiniteError naming the first gradient array holding NaN/Inf.
void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double eta,
               const AdamSettings& settings = {});

// Patience counter over a per-epoch validation score. Only a strictly
// greater score counts as an improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when `score` is a new best.
  bool record(double score);
  bool should_stop() const { return epochs_ > 0 && epochs_ - best_epoch_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any record
  double best_score() const { return best_score_; }
  std::size_t epochs() const { return epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_score_ = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // summed BCE / document count
  double valid_score = 0.0;
  bool is_best = false;
};

struct FitResult {
  ModelParams best;  // parameters after the best-validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_valid_score = 0.0;
};

// Receives each epoch's record and the parameters at the end of that epoch.
using EpochCallback = std::function<void(const EpochRecord&, const ModelParams&)>;

// Trains on the fixed length-sorted batch sequence and keeps the parameters
// of the best validation epoch (P@n at batch size 1, dropout off). `rng`
// continues the run's stream and drives dropout.
FitResult fit(ModelParams model, const Hyperparams& hp, std::span<const Document> train,
              std::span<const Document> valid, std::size_t num_labels, const TrainConfig& config,
              Rng& rng, const EpochCallback& on_epoch = {});

// Per-document probabilities (N x L, input order), batch size 1, no dropout.
Matrix predict(const ModelParams& model, std::span<const Document> docs);
// Same, after checking the corpus was ingested with a vocabulary and label
// space of the model's size.
Matrix predict(const ModelParams& model, const Corpus& corpus);

// Where the embedding table comes from.
struct EmbeddingSource {
  std::optional<std::filesystem::path> pretrained;
  std::size_t dim = kDefaultEmbeddingDim;  // used when nothing is pretrained
};

// Draws the initial parameters for a run in stream order: parameter init,
// then pretrained-embedding OOV rows.
ModelParams build_model(Arch arch, const Hyperparams& hp, const Corpus& train,
                        const EmbeddingSource& embeddings, Rng& rng);

// `epoch<TAB>train_loss<TAB>valid_p@n<TAB>is_best` with a header line.
void write_history(const std::filesystem::path& path, std::span<const EpochRecord> history,
                   std::size_t top_n);

}  // namespace attnlab
