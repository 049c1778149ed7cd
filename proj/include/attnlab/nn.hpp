#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <type_traits>
#include <vector>

#include "attnlab/corpus.hpp"
#include "attnlab/types.hpp"

namespace attnlab {

enum class Arch : std::uint32_t { kCnn = 0, kCaml = 1 };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view name);  // "cnn" | "caml"

// The tunable tuple: filter count, filter size, dropout probability, learning rate.
struct Hyperparams {
  int d_c = 50;
  int k = 10;
  double q = 0.2;
  double eta = 0.0001;

  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct ModelShape {
  Arch arch = Arch::kCaml;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = kDefaultEmbeddingDim;
  std::size_t filters = 0;
  std::size_t kernel = 0;
  std::size_t labels = 0;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

// Every trainable array of one CNN or CAML instance. The same struct carries
// gradients and optimizer moments.
struct ModelParams {
  Arch arch = Arch::kCaml;
  Matrix embedding;    // V x d, row 0 (PAD) stays zero
  Matrix conv_weight;  // d_c x (d*k); entry (f, c*k + j) is filter f, channel c, tap j
  Vector conv_bias;    // d_c
  Matrix attention_u;  // L x d_c, empty for CNN
  Matrix output_w;     // L x d_c
  Vector output_bias;  // L

  ModelShape shape() const;
  static ModelParams zeros(const ModelShape& shape);
};

// Glorot-uniform conv/linear/attention weights, zero biases, N(0, 1)
// embeddings with a zero PAD row. Consumes `rng` in declaration order.
ModelParams init_params(const ModelShape& shape, Rng& rng);

// Calls fn(name, span) for every trainable array in declaration order.
template <typename Params, typename Fn>
void for_each_array(Params& p, Fn&& fn) {
  using Elem = std::conditional_t<std::is_const_v<Params>, const double, double>;
  auto view = [](auto& m) { return std::span<Elem>(m.data(), static_cast<std::size_t>(m.size())); };
  fn(std::string_view("embedding"), view(p.embedding));
  fn(std::string_view("conv_weight"), view(p.conv_weight));
  fn(std::string_view("conv_bias"), view(p.conv_bias));
  if (p.arch == Arch::kCaml) fn(std::string_view("attention_u"), view(p.attention_u));
  fn(std::string_view("output_w"), view(p.output_w));
  fn(std::string_view("output_bias"), view(p.output_bias));
}

struct Padding {
  std::size_t left = 0;
  std::size_t right = 0;
};

// CAML keeps the sequence length: floor((k-1)/2) left, ceil((k-1)/2) right.
Padding same_padding(std::size_t kernel);

// Stride-1 convolution of x (d x T) with weight (d_c x d*k); zero padding.
Matrix conv1d(const Matrix& x, const Matrix& weight, const Vector& bias, std::size_t kernel,
              Padding padding);

struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }
  static Dropout disabled() { return {}; }
};

struct DocTrace {
  std::vector<TokenId> tokens;  // padded batch row
  Matrix mask;                  // d x T, inverted dropout (all ones when disabled)
  Matrix embedded;              // d x T, after dropout
  Matrix hidden;                // d_c x T', post-tanh
  Matrix attention;             // CAML: L x T', rows sum to 1
  Matrix context;               // CAML: L x d_c, v_l = H alpha_l
  Vector pooled;                // CNN: d_c
  std::vector<Eigen::Index> argmax;  // CNN: time index of each filter's max
};

struct ForwardTrace {
  Arch arch = Arch::kCaml;
  std::vector<DocTrace> docs;
  Matrix logits;         // B x L
  Matrix probabilities;  // B x L
};

ForwardTrace forward_cnn(const ModelParams& params, const Batch& batch,
                         Dropout dropout = Dropout::disabled());
ForwardTrace forward_caml(const ModelParams& params, const Batch& batch,
                          Dropout dropout = Dropout::disabled());
// Dispatches on params.arch.
ForwardTrace forward(const ModelParams& params, const Batch& batch,
                     Dropout dropout = Dropout::disabled());

double sigmoid(double z);

// Summed binary cross-entropy, evaluated from logits in the overflow-free
// form max(z,0) - z*y + log1p(exp(-|z|)).
double bce_loss(const Matrix& logits, const Matrix& targets);

// Exact gradient of bce_loss w.r.t. every array. The PAD embedding row is
// not trainable and always receives zero.
ModelParams backward(const ModelParams& params, const ForwardTrace& trace, const Matrix& targets);

// Checkpoint: "ATNLAB01", u32 LE [arch, V, d, d_c, k, L], then arrays as
// float32 LE in declaration order.
void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

// Rounds every entry through float32, i.e. what a checkpoint round trip yields.
ModelParams round_to_float32(const ModelParams& params);

}  // namespace attnlab
