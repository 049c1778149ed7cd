#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnlab/corpus.hpp"
#include "attnlab/types.hpp"

namespace attnlab {

struct PredictionSet {
  Matrix probabilities;  // N x L, in [0, 1]
  Matrix truths;         // N x L, 0/1
  double threshold = 0.5;

  void validate() const;
};

// Mean over documents of |top-n labels ∩ truth| / n. Ties between scores go
// to the lower label index.
double precision_at_n(const PredictionSet& preds, std::size_t n);

// 2TP / (2TP + FP + FN) over all cells; 0 when nothing is predicted or true.
double micro_f1(const PredictionSet& preds);

struct MacroF1 {
  double standard = 0.0;  // mean of per-class F1
  double of_means = 0.0;  // F1 of macro-precision and macro-recall
};
MacroF1 macro_f1_both(const PredictionSet& preds);

struct MetricsReport {
  double micro_f1 = 0.0;
  double macro_f1_standard = 0.0;
  double macro_f1_of_means = 0.0;
  std::vector<std::pair<std::size_t, double>> p_at_n;

  double precision_at(std::size_t n) const;
  // `metric<TAB>value` lines, 6 decimals.
  std::string to_tsv() const;
};

MetricsReport evaluate(const PredictionSet& preds, std::span<const std::size_t> ns);

// N x L indicator matrix of the documents' label sets.
Matrix label_matrix(std::span<const Document> docs, std::size_t num_labels);

}  // namespace attnlab
