#include "attnlab/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>

#include "attnlab/error.hpp"

namespace attnlab {
namespace {

std::vector<std::string_view> split(std::string_view text, char sep, bool skip_empty) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(sep, start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view piece = text.substr(start, end - start);
    if (!(skip_empty && piece.empty())) out.push_back(piece);
    start = end + 1;
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

struct RawRecord {
  std::string_view id;
  std::vector<std::string_view> labels;
  std::vector<std::string_view> tokens;
};

RawRecord split_record(std::string_view line, std::size_t line_no) {
  auto fields = split(line, '\t', false);
  if (fields.size() != 3) {
    throw ParseError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                     std::to_string(fields.size()));
  }
  RawRecord rec{fields[0], split(fields[1], ';', true), split(fields[2], ' ', true)};
  if (rec.tokens.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": record '" + std::string(rec.id) +
                     "' has an empty token field");
  }
  return rec;
}

// Shared ingestion loop; `token_id` and `label_id` decide how strings become ids.
template <typename TokenFn, typename LabelFn>
std::vector<Document> ingest(std::istream& in, std::size_t max_tokens, TokenFn token_id,
                             LabelFn label_id) {
  if (max_tokens == 0) throw Error("max_tokens must be positive");
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    RawRecord rec = split_record(strip_cr(line), line_no);
    Document doc;
    doc.id = std::string(rec.id);
    const std::size_t kept = std::min(rec.tokens.size(), max_tokens);
    doc.tokens.reserve(kept);
    // Tokens past the cap are dropped before they can enter the vocabulary.
    for (std::size_t i = 0; i < kept; ++i) doc.tokens.push_back(token_id(rec.tokens[i]));
    for (auto label : rec.labels) doc.labels.push_back(label_id(label, line_no));
    std::sort(doc.labels.begin(), doc.labels.end());
    doc.labels.erase(std::unique(doc.labels.begin(), doc.labels.end()), doc.labels.end());
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  id_to_token_.reserve(tokens.size() + 2);
  id_to_token_.push_back("<pad>");
  id_to_token_.push_back("<unk>");
  for (auto& tok : tokens) {
    auto id = static_cast<TokenId>(id_to_token_.size());
    if (!token_to_id_.emplace(tok, id).second) throw Error("duplicate vocabulary token '" + tok + "'");
    id_to_token_.push_back(std::move(tok));
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  return id_to_token_.at(static_cast<std::size_t>(id));
}

LabelSpace::LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], static_cast<LabelId>(i)).second) {
      throw Error("duplicate label '" + names_[i] + "'");
    }
  }
}

std::optional<LabelId> LabelSpace::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> truncate(std::span<const TokenId> tokens, std::size_t max_tokens) {
  const auto n = std::min(tokens.size(), max_tokens);
  return {tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n)};
}

Corpus parse_corpus(std::istream& in, std::size_t max_tokens) {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, TokenId> token_ids;
  std::vector<std::string> labels;
  std::unordered_map<std::string, LabelId> label_ids;

  auto docs = ingest(
      in, max_tokens,
      [&](std::string_view tok) {
        auto [it, fresh] =
            token_ids.emplace(std::string(tok), static_cast<TokenId>(tokens.size() + 2));
        if (fresh) tokens.emplace_back(tok);
        return it->second;
      },
      [&](std::string_view name, std::size_t) {
        auto [it, fresh] = label_ids.emplace(std::string(name), static_cast<LabelId>(labels.size()));
        if (fresh) labels.emplace_back(name);
        return it->second;
      });
  return Corpus{std::move(docs), Vocabulary(std::move(tokens)), LabelSpace(std::move(labels))};
}

Corpus parse_corpus(std::istream& in, const Vocabulary& vocab, const LabelSpace& labels,
                    std::size_t max_tokens) {
  auto docs = ingest(
      in, max_tokens, [&](std::string_view tok) { return vocab.lookup(tok); },
      [&](std::string_view name, std::size_t line_no) {
        auto id = labels.find(name);
        if (!id) {
          throw ParseError("line " + std::to_string(line_no) + ": unknown label '" +
                           std::string(name) + "'");
        }
        return *id;
      });
  return Corpus{std::move(docs), vocab, labels};
}

Corpus load_corpus(const std::filesystem::path& path, std::size_t max_tokens) {
  auto in = open_input(path);
  try {
    return parse_corpus(in, max_tokens);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Corpus load_corpus(const std::filesystem::path& path, const Vocabulary& vocab,
                   const LabelSpace& labels, std::size_t max_tokens) {
  auto in = open_input(path);
  try {
    return parse_corpus(in, vocab, labels, max_tokens);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Matrix parse_embeddings(std::istream& in, const Vocabulary& vocab, Rng& rng) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("embeddings: missing header");
  long declared_rows = 0;
  long dim = 0;
  {
    std::istringstream header{std::string(strip_cr(line))};
    if (!(header >> declared_rows >> dim) || declared_rows < 0 || dim <= 0) {
      throw ParseError("embeddings: header must be `V d` with d > 0");
    }
  }
  const auto V = static_cast<Eigen::Index>(vocab.size());
  Matrix weights = Matrix::Zero(V, dim);
  std::vector<bool> filled(static_cast<std::size_t>(V), false);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split(strip_cr(line), ' ', true);
    if (fields.empty()) continue;
    if (static_cast<long>(fields.size()) - 1 != dim) {
      throw ParseError("embeddings line " + std::to_string(line_no) + ": expected " +
                       std::to_string(dim) + " values, got " + std::to_string(fields.size() - 1));
    }
    std::vector<double> values(static_cast<std::size_t>(dim));
    for (long j = 0; j < dim; ++j) {
      auto f = fields[static_cast<std::size_t>(j) + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), values[static_cast<std::size_t>(j)]);
      if (ec != std::errc{} || ptr != f.data() + f.size()) {
        throw ParseError("embeddings line " + std::to_string(line_no) + ": non-numeric value '" +
                         std::string(f) + "'");
      }
    }
    auto id = vocab.find(fields[0]);
    if (!id || filled[static_cast<std::size_t>(*id)]) continue;
    filled[static_cast<std::size_t>(*id)] = true;
    for (long j = 0; j < dim; ++j) weights(*id, j) = values[static_cast<std::size_t>(j)];
  }

  const double bound = 0.25 / static_cast<double>(dim);
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (Eigen::Index id = Vocabulary::kUnk; id < V; ++id) {
    if (filled[static_cast<std::size_t>(id)]) continue;
    for (long j = 0; j < dim; ++j) weights(id, j) = uniform(rng);
  }
  weights.row(Vocabulary::kPad).setZero();
  return weights;
}

Matrix load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, Rng& rng) {
  auto in = open_input(path);
  try {
    return parse_embeddings(in, vocab, rng);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<Batch> make_batches(std::span<const Document> docs, std::size_t batch_size,
                                std::size_t num_labels) {
  if (docs.empty()) throw Error("make_batches: empty document list");
  if (batch_size == 0) throw Error("make_batches: batch_size must be positive");

  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return docs[a].tokens.size() < docs[b].tokens.size();
  });

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    Batch batch;
    std::size_t width = 0;
    for (std::size_t i = start; i < stop; ++i) width = std::max(width, docs[order[i]].tokens.size());
    const auto rows = static_cast<Eigen::Index>(stop - start);
    batch.tokens.setConstant(rows, static_cast<Eigen::Index>(width), Vocabulary::kPad);
    batch.targets = Matrix::Zero(rows, static_cast<Eigen::Index>(num_labels));
    for (std::size_t i = start; i < stop; ++i) {
      const Document& doc = docs[order[i]];
      const auto r = static_cast<Eigen::Index>(i - start);
      batch.doc_index.push_back(order[i]);
      batch.doc_ids.push_back(doc.id);
      batch.lengths.push_back(doc.tokens.size());
      for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
        batch.tokens(r, static_cast<Eigen::Index>(t)) = doc.tokens[t];
      }
      for (LabelId l : doc.labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_labels) {
          throw ShapeError("document '" + doc.id + "' has label id outside [0, L)");
        }
        batch.targets(r, l) = 1.0;
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.emplace_back(strip_cr(line));
  return lines;
}

void write_lines(const std::filesystem::path& path, std::span<const std::string> lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  write_lines(path, vocab.corpus_tokens());
}

Vocabulary load_vocabulary(const std::filesystem::path& path) { return Vocabulary(read_lines(path)); }

void save_labels(const std::filesystem::path& path, const LabelSpace& labels) {
  write_lines(path, labels.names());
}

LabelSpace load_labels(const std::filesystem::path& path) { return LabelSpace(read_lines(path)); }

}  // namespace attnlab
