#include "attnlab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "attnlab/error.hpp"
#include "attnlab/metrics.hpp"

namespace attnlab {

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (max_epochs < 1) throw Error("max_epochs must be >= 1");
  if (patience < 1) throw Error("patience must be >= 1");
  if (val_top_n < 1) throw Error("validation P@n needs n >= 1");
}

OptimizerState OptimizerState::fresh(const ModelShape& shape) {
  return {ModelParams::zeros(shape), ModelParams::zeros(shape), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double eta,
               const AdamSettings& settings) {
  if (params.shape() != grads.shape() || params.shape() != state.first_moment.shape() ||
      params.shape() != state.second_moment.shape()) {
    throw ShapeError("adam_step: parameter, gradient and moment shapes differ");
  }
  for_each_array(grads, [](std::string_view name, std::span<const double> g) {
    for (double v : g) {
      if (!std::isfinite(v)) throw NonFiniteError("non-finite gradient in " + std::string(name));
    }
  });

  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(settings.beta1, t);
  const double correction2 = 1.0 - std::pow(settings.beta2, t);

  std::vector<std::span<double>> theta, m, v;
  std::vector<std::span<const double>> g;
  for_each_array(params, [&](std::string_view, std::span<double> a) { theta.push_back(a); });
  for_each_array(state.first_moment, [&](std::string_view, std::span<double> a) { m.push_back(a); });
  for_each_array(state.second_moment, [&](std::string_view, std::span<double> a) { v.push_back(a); });
  for_each_array(grads, [&](std::string_view, std::span<const double> a) { g.push_back(a); });

  for (std::size_t a = 0; a < theta.size(); ++a) {
    for (std::size_t i = 0; i < theta[a].size(); ++i) {
      m[a][i] = settings.beta1 * m[a][i] + (1.0 - settings.beta1) * g[a][i];
      v[a][i] = settings.beta2 * v[a][i] + (1.0 - settings.beta2) * g[a][i] * g[a][i];
      const double m_hat = m[a][i] / correction1;
      const double v_hat = v[a][i] / correction2;
      theta[a][i] -= eta * m_hat / (std::sqrt(v_hat) + settings.epsilon);
    }
  }
  params.embedding.row(Vocabulary::kPad).setZero();
}

bool EarlyStopping::record(double score) {
  ++epochs_;
  if (best_epoch_ == 0 || score > best_score_) {
    best_epoch_ = epochs_;
    best_score_ = score;
    return true;
  }
  return false;
}

Matrix predict(const ModelParams& model, std::span<const Document> docs) {
  const Eigen::Index L = model.output_w.rows();
  Matrix probs(static_cast<Eigen::Index>(docs.size()), L);
  if (docs.empty()) return probs;
  for (const Batch& batch : make_batches(docs, 1, static_cast<std::size_t>(L))) {
    const ForwardTrace trace = forward(model, batch);
    probs.row(static_cast<Eigen::Index>(batch.doc_index[0])) = trace.probabilities.row(0);
  }
  return probs;
}

Matrix predict(const ModelParams& model, const Corpus& corpus) {
  const ModelShape shape = model.shape();
  if (corpus.vocab.size() != shape.vocab_size) {
    throw VocabularyMismatch("vocabulary has " + std::to_string(corpus.vocab.size()) +
                             " entries but the checkpoint expects V = " +
                             std::to_string(shape.vocab_size));
  }
  if (corpus.num_labels() != shape.labels) {
    throw VocabularyMismatch("label space has " + std::to_string(corpus.num_labels()) +
                             " labels but the checkpoint expects L = " + std::to_string(shape.labels));
  }
  return predict(model, std::span<const Document>(corpus.docs));
}

FitResult fit(ModelParams model, const Hyperparams& hp, std::span<const Document> train,
              std::span<const Document> valid, std::size_t num_labels, const TrainConfig& config,
              Rng& rng, const EpochCallback& on_epoch) {
  config.validate();
  hp.validate();
  if (config.val_top_n > num_labels) {
    throw Error("validation P@" + std::to_string(config.val_top_n) + " needs at least that many labels");
  }
  if (valid.empty()) throw Error("validation set is empty");
  if (static_cast<std::size_t>(model.output_w.rows()) != num_labels) {
    throw ShapeError("model label count differs from the corpus");
  }

  const std::vector<Batch> batches = make_batches(train, config.batch_size, num_labels);
  const Matrix valid_truth = label_matrix(valid, num_labels);
  OptimizerState state = OptimizerState::fresh(model.shape());
  EarlyStopping stopper(config.patience);
  FitResult result;
  result.best = model;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const ForwardTrace trace = forward(model, batches[b], Dropout{hp.q, &rng});
      const double loss = bce_loss(trace.logits, batches[b].targets);
      if (!std::isfinite(loss)) {
        throw NonFiniteError("non-finite training loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(b + 1));
      }
      epoch_loss += loss;
      adam_step(model, backward(model, trace, batches[b].targets), state, hp.eta, config.adam);
    }

    const double score =
        precision_at_n(PredictionSet{predict(model, valid), valid_truth}, config.val_top_n);
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(train.size()), score, stopper.record(score)};
    if (rec.is_best) result.best = model;
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec, model);
    if (stopper.should_stop()) break;
  }
  result.best_epoch = stopper.best_epoch();
  result.best_valid_score = stopper.best_score();
  return result;
}

namespace {

std::size_t embedding_file_dim(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  long rows = 0, dim = 0;
  if (!std::getline(in, line) || !(std::istringstream(line) >> rows >> dim) || dim <= 0) {
    throw ParseError(path.string() + ": header must be `V d` with d > 0");
  }
  return static_cast<std::size_t>(dim);
}

}  // namespace

ModelParams build_model(Arch arch, const Hyperparams& hp, const Corpus& train,
                        const EmbeddingSource& embeddings, Rng& rng) {
  hp.validate();
  ModelShape shape;
  shape.arch = arch;
  shape.vocab_size = train.vocab.size();
  shape.embed_dim = embeddings.pretrained ? embedding_file_dim(*embeddings.pretrained) : embeddings.dim;
  shape.filters = static_cast<std::size_t>(hp.d_c);
  shape.kernel = static_cast<std::size_t>(hp.k);
  shape.labels = train.num_labels();
  ModelParams model = init_params(shape, rng);
  if (embeddings.pretrained) model.embedding = load_embeddings(*embeddings.pretrained, train.vocab, rng);
  return model;
}

void write_history(const std::filesystem::path& path, std::span<const EpochRecord> history,
                   std::size_t top_n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch\ttrain_loss\tvalid_p@" << top_n << "\tis_best\n";
  char buf[128];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%d\n", r.epoch, r.train_loss, r.valid_score,
                  r.is_best ? 1 : 0);
    out << buf;
  }
}

}  // namespace attnlab
