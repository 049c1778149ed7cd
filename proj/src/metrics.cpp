#include "attnlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "attnlab/error.hpp"

namespace attnlab {
namespace {

using Index = Eigen::Index;

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double harmonic(double p, double r) { return ratio(2.0 * p * r, p + r); }

struct Counts {
  double tp = 0, fp = 0, fn = 0;
};

Counts count_cell(Counts c, double prob, double truth, double threshold) {
  const bool predicted = prob >= threshold;
  const bool actual = truth > 0.5;
  if (predicted && actual) c.tp += 1;
  if (predicted && !actual) c.fp += 1;
  if (!predicted && actual) c.fn += 1;
  return c;
}

}  // namespace

void PredictionSet::validate() const {
  if (probabilities.rows() != truths.rows() || probabilities.cols() != truths.cols()) {
    throw ShapeError("prediction set: probabilities and truths differ in shape");
  }
  if (probabilities.rows() < 1 || probabilities.cols() < 1) {
    throw ShapeError("prediction set: need at least one document and one label");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error("threshold must lie in (0, 1)");
}

double precision_at_n(const PredictionSet& preds, std::size_t n) {
  preds.validate();
  const Index L = preds.probabilities.cols();
  if (n < 1 || n > static_cast<std::size_t>(L)) {
    throw Error("precision@" + std::to_string(n) + " undefined for " + std::to_string(L) + " labels");
  }
  std::vector<Index> order(static_cast<std::size_t>(L));
  double total = 0.0;
  for (Index i = 0; i < preds.probabilities.rows(); ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    auto row = preds.probabilities.row(i);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](Index a, Index b) { return row(a) > row(b) || (row(a) == row(b) && a < b); });
    double hits = 0.0;
    for (std::size_t j = 0; j < n; ++j) hits += preds.truths(i, order[j]) > 0.5 ? 1.0 : 0.0;
    total += hits / static_cast<double>(n);
  }
  return total / static_cast<double>(preds.probabilities.rows());
}

double micro_f1(const PredictionSet& preds) {
  preds.validate();
  Counts c;
  for (Index i = 0; i < preds.probabilities.rows(); ++i) {
    for (Index l = 0; l < preds.probabilities.cols(); ++l) {
      c = count_cell(c, preds.probabilities(i, l), preds.truths(i, l), preds.threshold);
    }
  }
  return ratio(2.0 * c.tp, 2.0 * c.tp + c.fp + c.fn);
}

MacroF1 macro_f1_both(const PredictionSet& preds) {
  preds.validate();
  const Index L = preds.probabilities.cols();
  double sum_f1 = 0.0, sum_p = 0.0, sum_r = 0.0;
  for (Index l = 0; l < L; ++l) {
    Counts c;
    for (Index i = 0; i < preds.probabilities.rows(); ++i) {
      c = count_cell(c, preds.probabilities(i, l), preds.truths(i, l), preds.threshold);
    }
    const double p = ratio(c.tp, c.tp + c.fp);
    const double r = ratio(c.tp, c.tp + c.fn);
    sum_p += p;
    sum_r += r;
    sum_f1 += harmonic(p, r);
  }
  const auto classes = static_cast<double>(L);
  return {sum_f1 / classes, harmonic(sum_p / classes, sum_r / classes)};
}

double MetricsReport::precision_at(std::size_t n) const {
  for (const auto& [k, v] : p_at_n) {
    if (k == n) return v;
  }
  throw Error("report has no precision@" + std::to_string(n));
}

std::string MetricsReport::to_tsv() const {
  std::string out;
  char buf[96];
  auto line = [&](const std::string& name, double v) {
    std::snprintf(buf, sizeof buf, "\t%.6f\n", v);
    out += name;
    out += buf;
  };
  line("micro_f1", micro_f1);
  line("macro_f1_standard", macro_f1_standard);
  line("macro_f1_of_means", macro_f1_of_means);
  for (const auto& [n, v] : p_at_n) line("p@" + std::to_string(n), v);
  return out;
}

MetricsReport evaluate(const PredictionSet& preds, std::span<const std::size_t> ns) {
  MetricsReport report;
  report.micro_f1 = micro_f1(preds);
  const MacroF1 macro = macro_f1_both(preds);
  report.macro_f1_standard = macro.standard;
  report.macro_f1_of_means = macro.of_means;
  for (std::size_t n : ns) report.p_at_n.emplace_back(n, precision_at_n(preds, n));
  return report;
}

Matrix label_matrix(std::span<const Document> docs, std::size_t num_labels) {
  Matrix m = Matrix::Zero(static_cast<Index>(docs.size()), static_cast<Index>(num_labels));
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (LabelId l : docs[i].labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= num_labels) {
        throw ShapeError("document '" + docs[i].id + "' has label id outside [0, L)");
      }
      m(static_cast<Index>(i), l) = 1.0;
    }
  }
  return m;
}

}  // namespace attnlab
