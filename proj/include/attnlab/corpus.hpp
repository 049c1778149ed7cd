#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attnlab/types.hpp"

namespace attnlab {

inline constexpr std::size_t kDefaultMaxTokens = 2500;
inline constexpr int kDefaultEmbeddingDim = 100;

struct Document {
  std::string id;
  std::vector<TokenId> tokens;
  // Sorted, duplicate-free.
  std::vector<LabelId> labels;
};

// Token <-> id map. Ids 0 and 1 are reserved for PAD and UNK and are never
// reachable through lookup(); corpus tokens start at id 2 in first-seen order.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}
  // `tokens` are the non-reserved entries in id order (tokens[0] gets id 2).
  explicit Vocabulary(std::vector<std::string> tokens);

  std::optional<TokenId> find(std::string_view token) const;
  TokenId lookup(std::string_view token) const { return find(token).value_or(kUnk); }
  const std::string& token(TokenId id) const;
  std::size_t size() const { return id_to_token_.size(); }

  // Non-reserved tokens in id order.
  std::span<const std::string> corpus_tokens() const {
    return std::span<const std::string>(id_to_token_).subspan(2);
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

// Label string <-> dense label id, first-seen order.
class LabelSpace {
 public:
  LabelSpace() = default;
  explicit LabelSpace(std::vector<std::string> names);

  std::optional<LabelId> find(std::string_view name) const;
  const std::string& name(LabelId id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return names_.size(); }
  std::span<const std::string> names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, LabelId> index_;
};

struct Corpus {
  std::vector<Document> docs;
  Vocabulary vocab;
  LabelSpace labels;

  std::size_t num_labels() const { return labels.size(); }
};

// Keeps the first `max_tokens` entries.
std::vector<TokenId> truncate(std::span<const TokenId> tokens, std::size_t max_tokens);

// Reads `id<TAB>label;label;...<TAB>token token ...` records. Builds the
// vocabulary and label space from the file itself.
Corpus load_corpus(const std::filesystem::path& path, std::size_t max_tokens = kDefaultMaxTokens);
// Maps tokens through a fixed vocabulary (unseen -> UNK); every label must
// already exist in `labels`.
Corpus load_corpus(const std::filesystem::path& path, const Vocabulary& vocab,
                   const LabelSpace& labels, std::size_t max_tokens = kDefaultMaxTokens);

Corpus parse_corpus(std::istream& in, std::size_t max_tokens = kDefaultMaxTokens);
Corpus parse_corpus(std::istream& in, const Vocabulary& vocab, const LabelSpace& labels,
                    std::size_t max_tokens = kDefaultMaxTokens);

// Embedding text format: header `V d`, then `word v1 ... vd` per line.
// Rows are aligned to vocabulary ids; vocabulary words missing from the file
// (UNK included) are drawn from uniform(-0.25/d, 0.25/d); row 0 is zero.
Matrix load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, Rng& rng);
Matrix parse_embeddings(std::istream& in, const Vocabulary& vocab, Rng& rng);

struct Batch {
  std::vector<std::size_t> doc_index;  // positions in the input list
  std::vector<std::string> doc_ids;
  Eigen::Matrix<TokenId, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tokens;  // B x T
  std::vector<std::size_t> lengths;
  Matrix targets;  // B x L, 0/1

  std::size_t size() const { return lengths.size(); }
  std::size_t width() const { return static_cast<std::size_t>(tokens.cols()); }
};

// Stable ascending sort by length, then consecutive chunks of `batch_size`,
// each padded with PAD up to its own longest document.
std::vector<Batch> make_batches(std::span<const Document> docs, std::size_t batch_size,
                                std::size_t num_labels);

// One token (or label) per line, in id order, reserved entries omitted.
void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const LabelSpace& labels);
LabelSpace load_labels(const std::filesystem::path& path);

}  // namespace attnlab
