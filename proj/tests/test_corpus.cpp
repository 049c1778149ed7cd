#include <doctest.h>

#include <sstream>

#include "attnlab/corpus.hpp"
#include "attnlab/error.hpp"
#include "reference.hpp"

using namespace attnlab;

namespace {

Corpus parse(const std::string& text, std::size_t max_tokens = kDefaultMaxTokens) {
  std::istringstream in(text);
  return parse_corpus(in, max_tokens);
}

std::string long_doc(std::size_t n) {
  std::string s = "long\tA\t";
  for (std::size_t i = 0; i < n; ++i) s += (i ? " t" : "t") + std::to_string(i);
  return s + "\n";
}

}  // namespace

TEST_CASE("load_corpus counts labels and documents") {
  const Corpus c = parse("d1\tA\tx y\nd2\tA;B\ty z\nd3\tB\tz\n");
  CHECK(c.docs.size() == 3);
  CHECK(c.num_labels() == 2);
  CHECK(c.labels.name(0) == "A");
  CHECK(c.docs[1].labels == std::vector<LabelId>{0, 1});
  // PAD, UNK, then x y z
  CHECK(c.vocab.size() == 5);
  CHECK(c.docs[0].tokens == std::vector<TokenId>{2, 3});
}

TEST_CASE("documents longer than max_tokens keep their first max_tokens tokens") {
  const Corpus c = parse(long_doc(3000), 2500);
  REQUIRE(c.docs[0].tokens.size() == 2500);
  CHECK(c.vocab.token(c.docs[0].tokens.front()) == "t0");
  CHECK(c.vocab.token(c.docs[0].tokens.back()) == "t2499");
  CHECK_FALSE(c.vocab.find("t2500").has_value());
}

TEST_CASE("reloading with the training vocabulary reproduces the token ids") {
  const std::string text = "d1\tA\tx y q\nd2\tA;B\ty z\n";
  const Corpus first = parse(text);
  std::istringstream in(text);
  const Corpus again = parse_corpus(in, first.vocab, first.labels);
  for (std::size_t i = 0; i < first.docs.size(); ++i) CHECK(first.docs[i].tokens == again.docs[i].tokens);
}

TEST_CASE("unseen tokens map to UNK and unknown labels are rejected") {
  const Corpus train = parse("d1\tA\tx y\n");
  std::istringstream ok("v1\tA\tx never\n");
  CHECK(parse_corpus(ok, train.vocab, train.labels).docs[0].tokens ==
        std::vector<TokenId>{2, Vocabulary::kUnk});
  std::istringstream bad("v1\tZZZ\tx\n");
  CHECK_THROWS_WITH_AS(parse_corpus(bad, train.vocab, train.labels), doctest::Contains("ZZZ"), ParseError);
}

TEST_CASE("malformed records report their line number") {
  CHECK_THROWS_WITH_AS(parse("d1\tA\tx\nbroken line\n"), doctest::Contains("line 2"), ParseError);
  CHECK_THROWS_WITH_AS(parse("d1\tA\t\n"), doctest::Contains("empty token field"), ParseError);
  CHECK_THROWS_AS(parse("d1\tA\tx\textra\n"), ParseError);
}

TEST_CASE("reserved ids never collide with corpus tokens") {
  const Corpus c = parse("d1\tA\t<pad> <unk>\n");
  CHECK(c.docs[0].tokens == std::vector<TokenId>{2, 3});
  CHECK(c.vocab.lookup("<pad>") == 2);
}

TEST_CASE("vocabulary id -> token -> id is the identity on corpus ids") {
  const Corpus c = parse("a\tA\tp q r s t\nb\tB\tt u v p\n");
  for (TokenId id = 2; id < static_cast<TokenId>(c.vocab.size()); ++id) {
    CHECK(c.vocab.lookup(c.vocab.token(id)) == id);
  }
}

TEST_CASE("truncation is idempotent") {
  Rng rng(3);
  std::uniform_int_distribution<int> len(0, 40), cap(1, 30);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TokenId> x(static_cast<std::size_t>(len(rng)), 7);
    const auto m = static_cast<std::size_t>(cap(rng));
    const auto once = truncate(x, m);
    CHECK(truncate(once, m) == once);
    CHECK(once.size() == std::min(x.size(), m));
  }
}

TEST_CASE("load_embeddings copies rows, zeroes PAD and seeds the rest") {
  const Corpus c = parse("d\tA\tx y z\n");
  const std::string file = "3 4\nx 1 2 3 4\ny 0.5 0.5 0.5 0.5\nnot_in_vocab 9 9 9 9\n";
  Rng rng(42);
  std::istringstream in(file);
  const Matrix e = parse_embeddings(in, c.vocab, rng);
  REQUIRE(e.rows() == 5);
  REQUIRE(e.cols() == 4);
  CHECK(e.row(Vocabulary::kPad).isZero(0.0));
  CHECK(e(2, 0) == 1.0);
  CHECK(e(2, 3) == 4.0);
  CHECK(e(3, 1) == 0.5);
  // UNK and z are missing from the file
  for (Eigen::Index id : {Eigen::Index{1}, Eigen::Index{4}}) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      CHECK(std::abs(e(id, j)) < 0.25 / 4);
    }
  }
  Rng rng2(42);
  std::istringstream in2(file);
  const Matrix again = parse_embeddings(in2, c.vocab, rng2);
  CHECK(again == e);
}

TEST_CASE("load_embeddings rejects ragged or non-numeric rows") {
  const Corpus c = parse("d\tA\tx\n");
  Rng rng(1);
  std::istringstream ragged("2 3\nx 1 2 3\ny 1 2\n");
  CHECK_THROWS_WITH_AS(parse_embeddings(ragged, c.vocab, rng), doctest::Contains("line 3"), ParseError);
  std::istringstream words("1 2\nx 1 abc\n");
  CHECK_THROWS_WITH_AS(parse_embeddings(words, c.vocab, rng), doctest::Contains("abc"), ParseError);
}

TEST_CASE("make_batches sorts ascending and pads per batch") {
  std::vector<Document> docs(3);
  const std::size_t lengths[] = {5, 2, 9};
  for (std::size_t i = 0; i < 3; ++i) {
    docs[i].id = "d" + std::to_string(i);
    docs[i].tokens.assign(lengths[i], 3);
    docs[i].labels = {static_cast<LabelId>(i % 2)};
  }
  const auto batches = make_batches(docs, 2, 2);
  REQUIRE(batches.size() == 2);
  CHECK(batches[0].lengths == std::vector<std::size_t>{2, 5});
  CHECK(batches[0].width() == 5);
  CHECK(batches[1].lengths == std::vector<std::size_t>{9});
  CHECK(batches[1].width() == 9);
  CHECK(batches[0].doc_index == std::vector<std::size_t>{1, 0});
  CHECK(batches[0].tokens(0, 2) == Vocabulary::kPad);
  CHECK(batches[0].targets(0, 1) == 1.0);
  CHECK(batches[0].targets(1, 0) == 1.0);
}

TEST_CASE("make_batches invariants on random corpora") {
  Rng rng(11);
  std::uniform_int_distribution<std::size_t> len(1, 12), bs(1, 6), count(1, 25);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::size_t> lengths(count(rng));
    for (auto& l : lengths) l = len(rng);
    const auto docs = reference::random_documents(lengths, 30, 3, rng);
    const std::size_t batch_size = bs(rng);
    const auto batches = make_batches(docs, batch_size, 3);
    std::size_t seen = 0;
    std::size_t prev_len = 0;
    std::size_t prev_index = 0;
    for (const Batch& b : batches) {
      CHECK(b.size() <= batch_size);
      CHECK(b.width() == *std::max_element(b.lengths.begin(), b.lengths.end()));
      for (std::size_t r = 0; r < b.size(); ++r) {
        const auto& doc = docs[b.doc_index[r]];
        CHECK(b.lengths[r] == doc.tokens.size());
        for (std::size_t t = 0; t < b.width(); ++t) {
          const TokenId want = t < doc.tokens.size() ? doc.tokens[t] : Vocabulary::kPad;
          CHECK(b.tokens(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) == want);
        }
        // ascending length, file order among equal lengths
        CHECK(b.lengths[r] >= prev_len);
        if (seen > 0 && b.lengths[r] == prev_len) CHECK(b.doc_index[r] > prev_index);
        prev_len = b.lengths[r];
        prev_index = b.doc_index[r];
        ++seen;
      }
    }
    CHECK(seen == docs.size());
    // same input, same batches
    const auto again = make_batches(docs, batch_size, 3);
    REQUIRE(again.size() == batches.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
      CHECK(again[i].doc_index == batches[i].doc_index);
      CHECK(again[i].tokens == batches[i].tokens);
    }
  }
}

TEST_CASE("batch size 1 adds no padding") {
  Rng rng(5);
  const auto docs = reference::random_documents({4, 1, 7, 3}, 20, 2, rng);
  for (const Batch& b : make_batches(docs, 1, 2)) CHECK(b.width() == b.lengths[0]);
}

TEST_CASE("make_batches rejects an empty list") {
  CHECK_THROWS_AS(make_batches({}, 4, 2), Error);
}
