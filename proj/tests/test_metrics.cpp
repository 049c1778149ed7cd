#include <doctest.h>

#include <cmath>
#include <numeric>

#include "attnlab/error.hpp"
#include "attnlab/metrics.hpp"
#include "reference.hpp"

using namespace attnlab;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : values) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

PredictionSet random_set(Rng& rng, std::size_t max_n = 8, std::size_t max_l = 6) {
  std::uniform_int_distribution<Eigen::Index> n(1, static_cast<Eigen::Index>(max_n));
  std::uniform_int_distribution<Eigen::Index> l(1, static_cast<Eigen::Index>(max_l));
  // Coarse grid of scores so ties and exact-threshold hits occur.
  std::uniform_int_distribution<int> level(0, 10);
  std::bernoulli_distribution coin(0.4);
  PredictionSet s;
  const Eigen::Index N = n(rng), L = l(rng);
  s.probabilities.resize(N, L);
  s.truths.resize(N, L);
  for (Eigen::Index i = 0; i < s.probabilities.size(); ++i) {
    s.probabilities.data()[i] = level(rng) / 10.0;
    s.truths.data()[i] = coin(rng) ? 1.0 : 0.0;
  }
  return s;
}

}  // namespace

TEST_CASE("precision@n examples") {
  const PredictionSet s{rows({{0.9, 0.8, 0.7, 0.1, 0.05}}), rows({{1, 0, 1, 0, 0}})};
  CHECK(precision_at_n(s, 2) == 0.5);
  CHECK(precision_at_n(s, 3) == doctest::Approx(2.0 / 3.0));

  const PredictionSet all{rows({{0.1, 0.5, 0.2}, {0.3, 0.3, 0.3}}), Matrix::Ones(2, 3)};
  const PredictionSet none{all.probabilities, Matrix::Zero(2, 3)};
  for (std::size_t n = 1; n <= 3; ++n) {
    CHECK(precision_at_n(all, n) == 1.0);
    CHECK(precision_at_n(none, n) == 0.0);
  }
  CHECK_THROWS_AS(precision_at_n(all, 4), Error);
}

TEST_CASE("precision@n ties go to the lower label index") {
  const PredictionSet s{rows({{0.5, 0.5, 0.5}}), rows({{0, 1, 0}})};
  CHECK(precision_at_n(s, 1) == 0.0);
  CHECK(precision_at_n(s, 2) == 0.5);
}

TEST_CASE("micro F1 examples") {
  const Matrix truth = rows({{1, 0, 1}, {0, 1, 0}});
  CHECK(micro_f1({truth, truth}) == 1.0);
  // TP=2, FP=1, FN=1
  const Matrix probs = rows({{0.9, 0.7, 0.2}, {0.1, 0.6, 0.0}});
  CHECK(micro_f1({probs, truth}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(micro_f1({Matrix::Zero(2, 3), Matrix::Zero(2, 3)}) == 0.0);
  // the threshold is inclusive
  CHECK(micro_f1({rows({{0.5}}), rows({{1}})}) == 1.0);
}

TEST_CASE("the two macro F1 definitions diverge") {
  // class A: P = 1, R = 0.5; class B: P = 0.5, R = 1
  const Matrix truth = rows({{1, 1}, {1, 0}});
  const Matrix probs = rows({{0.9, 0.9}, {0.1, 0.9}});
  const MacroF1 m = macro_f1_both({probs, truth});
  CHECK(m.standard == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(m.of_means == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("macro F1 definitions agree when classes share (P, R)") {
  const Matrix truth = rows({{1, 1}, {1, 1}});
  const Matrix probs = rows({{0.9, 0.9}, {0.1, 0.1}});
  const MacroF1 m = macro_f1_both({probs, truth});
  CHECK(m.standard == doctest::Approx(m.of_means).epsilon(1e-15));
  const MacroF1 perfect = macro_f1_both({truth, truth});
  CHECK(perfect.standard == 1.0);
  CHECK(perfect.of_means == 1.0);
}

TEST_CASE("every metric agrees with the brute-force oracle") {
  Rng rng(71);
  for (int trial = 0; trial < 1000; ++trial) {
    const PredictionSet s = random_set(rng);
    const auto& p = s.probabilities;
    const auto& t = s.truths;
    CHECK(std::abs(micro_f1(s) - reference::micro_f1(p, t, 0.5)) < 1e-12);
    const MacroF1 m = macro_f1_both(s);
    CHECK(std::abs(m.standard - reference::macro_f1_standard(p, t, 0.5)) < 1e-12);
    CHECK(std::abs(m.of_means - reference::macro_f1_of_means(p, t, 0.5)) < 1e-12);
    for (std::size_t n = 1; n <= static_cast<std::size_t>(p.cols()); ++n) {
      CHECK(std::abs(precision_at_n(s, n) - reference::precision_at_n(p, t, n)) < 1e-12);
    }
  }
}

TEST_CASE("metrics are invariant to label and document permutations") {
  Rng rng(73);
  for (int trial = 0; trial < 200; ++trial) {
    const PredictionSet s = random_set(rng);
    const Eigen::Index N = s.probabilities.rows(), L = s.probabilities.cols();
    std::vector<Eigen::Index> docs(static_cast<std::size_t>(N)), labels(static_cast<std::size_t>(L));
    std::iota(docs.begin(), docs.end(), 0);
    std::iota(labels.begin(), labels.end(), 0);
    std::shuffle(docs.begin(), docs.end(), rng);
    std::shuffle(labels.begin(), labels.end(), rng);
    PredictionSet doc_perm = s;
    PredictionSet label_perm = s;
    for (Eigen::Index i = 0; i < N; ++i) {
      doc_perm.probabilities.row(i) = s.probabilities.row(docs[static_cast<std::size_t>(i)]);
      doc_perm.truths.row(i) = s.truths.row(docs[static_cast<std::size_t>(i)]);
    }
    for (Eigen::Index l = 0; l < L; ++l) {
      label_perm.probabilities.col(l) = s.probabilities.col(labels[static_cast<std::size_t>(l)]);
      label_perm.truths.col(l) = s.truths.col(labels[static_cast<std::size_t>(l)]);
    }
    // Break score ties so the lower-index tie rule is not what is being permuted.
    PredictionSet distinct = s;
    for (Eigen::Index i = 0; i < distinct.probabilities.size(); ++i) distinct.probabilities.data()[i] += 1e-9 * static_cast<double>(i);
    PredictionSet distinct_perm = distinct;
    for (Eigen::Index l = 0; l < L; ++l) {
      distinct_perm.probabilities.col(l) = distinct.probabilities.col(labels[static_cast<std::size_t>(l)]);
      distinct_perm.truths.col(l) = distinct.truths.col(labels[static_cast<std::size_t>(l)]);
    }

    for (const PredictionSet* other : {&doc_perm, &label_perm}) {
      CHECK(std::abs(micro_f1(*other) - micro_f1(s)) < 1e-12);
      CHECK(std::abs(macro_f1_both(*other).standard - macro_f1_both(s).standard) < 1e-12);
      CHECK(std::abs(macro_f1_both(*other).of_means - macro_f1_both(s).of_means) < 1e-12);
    }
    for (std::size_t n = 1; n <= static_cast<std::size_t>(L); ++n) {
      CHECK(std::abs(precision_at_n(doc_perm, n) - precision_at_n(s, n)) < 1e-12);
      CHECK(std::abs(precision_at_n(distinct_perm, n) - precision_at_n(distinct, n)) < 1e-12);
    }
  }
}

TEST_CASE("precision@n is invariant to strictly monotone score transforms") {
  Rng rng(79);
  for (int trial = 0; trial < 200; ++trial) {
    PredictionSet s = random_set(rng);
    PredictionSet t = s;
    t.probabilities = s.probabilities.unaryExpr([](double v) { return std::pow(v, 3.0) * 0.5 + 0.1; });
    for (std::size_t n = 1; n <= static_cast<std::size_t>(s.probabilities.cols()); ++n) {
      CHECK(precision_at_n(s, n) == precision_at_n(t, n));
    }
  }
}

TEST_CASE("report serialization") {
  const PredictionSet s{rows({{0.9, 0.2}, {0.6, 0.7}}), rows({{1, 0}, {0, 1}})};
  const std::size_t ns[] = {1, 2};
  const MetricsReport r = evaluate(s, ns);
  CHECK(r.to_tsv() ==
        "micro_f1\t0.800000\nmacro_f1_standard\t0.833333\nmacro_f1_of_means\t0.857143\n"
        "p@1\t1.000000\np@2\t0.500000\n");
  CHECK(r.precision_at(2) == 0.5);
  CHECK_THROWS_AS(r.precision_at(5), Error);
}

TEST_CASE("prediction set validation") {
  CHECK_THROWS_AS(micro_f1({Matrix::Zero(2, 3), Matrix::Zero(3, 2)}), ShapeError);
  CHECK_THROWS_AS(micro_f1({Matrix::Zero(2, 3), Matrix::Zero(2, 3), 1.0}), Error);
}
