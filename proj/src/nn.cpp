#include "attnlab/nn.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "attnlab/error.hpp"

namespace attnlab {
namespace {

using Index = Eigen::Index;

Index idx(std::size_t n) { return static_cast<Index>(n); }

// d*k x T' column matrix: row c*k + j, column t holds padded x(c, t + j).
Matrix im2col(const Matrix& x, std::size_t kernel, Padding pad) {
  const Index d = x.rows();
  const Index T = x.cols();
  const Index k = idx(kernel);
  const Index out_len = T + idx(pad.left) + idx(pad.right) - k + 1;
  Matrix cols = Matrix::Zero(d * k, out_len);
  for (Index c = 0; c < d; ++c) {
    for (Index j = 0; j < k; ++j) {
      for (Index t = 0; t < out_len; ++t) {
        const Index s = t + j - idx(pad.left);
        if (s >= 0 && s < T) cols(c * k + j, t) = x(c, s);
      }
    }
  }
  return cols;
}

// Adjoint of im2col.
Matrix col2im(const Matrix& cols, Index d, Index T, std::size_t kernel, Padding pad) {
  const Index k = idx(kernel);
  Matrix x = Matrix::Zero(d, T);
  for (Index c = 0; c < d; ++c) {
    for (Index j = 0; j < k; ++j) {
      for (Index t = 0; t < cols.cols(); ++t) {
        const Index s = t + j - idx(pad.left);
        if (s >= 0 && s < T) x(c, s) += cols(c * k + j, t);
      }
    }
  }
  return x;
}

std::size_t kernel_of(const ModelParams& p) {
  return static_cast<std::size_t>(p.conv_weight.cols() / p.embedding.cols());
}

Padding padding_for(const ModelParams& p) {
  return p.arch == Arch::kCaml ? same_padding(kernel_of(p)) : Padding{};
}

void check_params(const ModelParams& p) {
  const Index d = p.embedding.cols();
  const Index filters = p.conv_weight.rows();
  const Index L = p.output_w.rows();
  bool ok = d > 0 && p.embedding.rows() >= 2 && p.conv_weight.cols() > 0 &&
            p.conv_weight.cols() % d == 0 && p.conv_bias.size() == filters &&
            p.output_w.cols() == filters && p.output_bias.size() == L && L > 0;
  if (p.arch == Arch::kCaml) {
    ok = ok && p.attention_u.rows() == L && p.attention_u.cols() == filters;
  } else {
    ok = ok && p.attention_u.size() == 0;
  }
  if (!ok) throw ShapeError("inconsistent model parameter shapes");
}

// Embeds one padded batch row and applies inverted dropout.
DocTrace embed_row(const ModelParams& p, const Batch& batch, Index row, Dropout& dropout) {
  const Index T = batch.tokens.cols();
  const Index d = p.embedding.cols();
  DocTrace tr;
  tr.tokens.resize(static_cast<std::size_t>(T));
  tr.embedded.resize(d, T);
  for (Index t = 0; t < T; ++t) {
    const TokenId tok = batch.tokens(row, t);
    if (tok < 0 || tok >= p.embedding.rows()) {
      throw ShapeError("token id " + std::to_string(tok) + " outside the embedding table (document '" +
                       batch.doc_ids[static_cast<std::size_t>(row)] + "')");
    }
    tr.tokens[static_cast<std::size_t>(t)] = tok;
    tr.embedded.col(t) = p.embedding.row(tok).transpose();
  }
  tr.mask = Matrix::Ones(d, T);
  if (dropout.active()) {
    std::bernoulli_distribution keep(1.0 - dropout.rate);
    const double scale = 1.0 / (1.0 - dropout.rate);
    for (Index c = 0; c < d; ++c) {
      for (Index t = 0; t < T; ++t) tr.mask(c, t) = keep(*dropout.rng) ? scale : 0.0;
    }
    tr.embedded.array() *= tr.mask.array();
  }
  return tr;
}

Matrix convolve_tanh(const ModelParams& p, const Matrix& embedded) {
  return conv1d(embedded, p.conv_weight, p.conv_bias, kernel_of(p), padding_for(p))
      .array()
      .tanh()
      .matrix();
}

ForwardTrace start_trace(const ModelParams& p, const Batch& batch) {
  check_params(p);
  ForwardTrace trace;
  trace.arch = p.arch;
  trace.logits.resize(idx(batch.size()), p.output_w.rows());
  trace.docs.reserve(batch.size());
  return trace;
}

void finish_trace(ForwardTrace& trace) {
  trace.probabilities = trace.logits.unaryExpr([](double z) { return sigmoid(z); });
}

}  // namespace

std::string_view arch_name(Arch arch) { return arch == Arch::kCnn ? "cnn" : "caml"; }

Arch parse_arch(std::string_view name) {
  if (name == "cnn" || name == "CNN") return Arch::kCnn;
  if (name == "caml" || name == "CAML") return Arch::kCaml;
  throw Error("unknown architecture '" + std::string(name) + "' (expected cnn or caml)");
}

void Hyperparams::validate() const {
  if (d_c < 1) throw Error("d_c must be >= 1");
  if (k < 1) throw Error("k must be >= 1");
  if (!(q >= 0.0 && q < 1.0)) throw Error("dropout q must lie in [0, 1)");
  if (!(eta > 0.0)) throw Error("learning rate must be positive");
}

ModelShape ModelParams::shape() const {
  return {arch,
          static_cast<std::size_t>(embedding.rows()),
          static_cast<std::size_t>(embedding.cols()),
          static_cast<std::size_t>(conv_weight.rows()),
          embedding.cols() > 0 ? kernel_of(*this) : 0,
          static_cast<std::size_t>(output_w.rows())};
}

ModelParams ModelParams::zeros(const ModelShape& s) {
  ModelParams p;
  p.arch = s.arch;
  p.embedding = Matrix::Zero(idx(s.vocab_size), idx(s.embed_dim));
  p.conv_weight = Matrix::Zero(idx(s.filters), idx(s.embed_dim * s.kernel));
  p.conv_bias = Vector::Zero(idx(s.filters));
  if (s.arch == Arch::kCaml) p.attention_u = Matrix::Zero(idx(s.labels), idx(s.filters));
  p.output_w = Matrix::Zero(idx(s.labels), idx(s.filters));
  p.output_bias = Vector::Zero(idx(s.labels));
  return p;
}

ModelParams init_params(const ModelShape& s, Rng& rng) {
  if (s.vocab_size < 2 || s.embed_dim == 0 || s.filters == 0 || s.kernel == 0 || s.labels == 0) {
    throw ShapeError("model shape has a zero dimension");
  }
  ModelParams p = ModelParams::zeros(s);
  auto glorot = [&rng](Matrix& m, double fan_in, double fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-a, a);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  };
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index r = Vocabulary::kUnk; r < p.embedding.rows(); ++r) {
    for (Index c = 0; c < p.embedding.cols(); ++c) p.embedding(r, c) = normal(rng);
  }
  const auto d = static_cast<double>(s.embed_dim);
  const auto k = static_cast<double>(s.kernel);
  const auto filters = static_cast<double>(s.filters);
  const auto labels = static_cast<double>(s.labels);
  glorot(p.conv_weight, d * k, filters * k);
  if (s.arch == Arch::kCaml) glorot(p.attention_u, filters, labels);
  glorot(p.output_w, filters, labels);
  return p;
}

Padding same_padding(std::size_t kernel) {
  if (kernel == 0) throw ShapeError("kernel size must be positive");
  return {(kernel - 1) / 2, kernel / 2};
}

Matrix conv1d(const Matrix& x, const Matrix& weight, const Vector& bias, std::size_t kernel,
              Padding padding) {
  if (kernel == 0 || weight.cols() != x.rows() * idx(kernel) || bias.size() != weight.rows()) {
    throw ShapeError("conv1d: weight/bias shape does not match input channels and kernel");
  }
  if (static_cast<std::size_t>(x.cols()) + padding.left + padding.right < kernel) {
    throw ShapeError("conv1d: window of " + std::to_string(kernel) +
                     " exceeds padded input length " +
                     std::to_string(static_cast<std::size_t>(x.cols()) + padding.left + padding.right));
  }
  Matrix out = weight * im2col(x, kernel, padding);
  out.colwise() += bias;
  return out;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_loss(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw ShapeError("bce_loss: logits and targets differ in shape");
  }
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    for (Index l = 0; l < logits.cols(); ++l) {
      const double z = logits(i, l);
      total += std::max(z, 0.0) - z * targets(i, l) + std::log1p(std::exp(-std::abs(z)));
    }
  }
  return total;
}

ForwardTrace forward_cnn(const ModelParams& params, const Batch& batch, Dropout dropout) {
  if (params.arch != Arch::kCnn) throw ShapeError("forward_cnn called with a CAML model");
  ForwardTrace trace = start_trace(params, batch);
  const std::size_t kernel = kernel_of(params);
  for (Index b = 0; b < idx(batch.size()); ++b) {
    if (batch.width() < kernel) {
      throw ShapeError("document '" + batch.doc_ids[static_cast<std::size_t>(b)] + "' has " +
                       std::to_string(batch.width()) + " positions, shorter than filter size " +
                       std::to_string(kernel));
    }
    DocTrace tr = embed_row(params, batch, b, dropout);
    tr.hidden = convolve_tanh(params, tr.embedded);
    const Index filters = tr.hidden.rows();
    tr.pooled.resize(filters);
    tr.argmax.resize(static_cast<std::size_t>(filters));
    for (Index f = 0; f < filters; ++f) {
      Index best = 0;
      tr.pooled(f) = tr.hidden.row(f).maxCoeff(&best);
      tr.argmax[static_cast<std::size_t>(f)] = best;
    }
    trace.logits.row(b) = (params.output_w * tr.pooled + params.output_bias).transpose();
    trace.docs.push_back(std::move(tr));
  }
  finish_trace(trace);
  return trace;
}

ForwardTrace forward_caml(const ModelParams& params, const Batch& batch, Dropout dropout) {
  if (params.arch != Arch::kCaml) throw ShapeError("forward_caml called with a CNN model");
  ForwardTrace trace = start_trace(params, batch);
  for (Index b = 0; b < idx(batch.size()); ++b) {
    DocTrace tr = embed_row(params, batch, b, dropout);
    tr.hidden = convolve_tanh(params, tr.embedded);
    // Attention runs over every position of the padded row, PAD included.
    Matrix scores = params.attention_u * tr.hidden;  // L x T
    Vector row_max = scores.rowwise().maxCoeff();
    tr.attention = (scores.colwise() - row_max).array().exp().matrix();
    Vector row_sum = tr.attention.rowwise().sum();
    for (Index l = 0; l < tr.attention.rows(); ++l) tr.attention.row(l) /= row_sum(l);
    tr.context = tr.attention * tr.hidden.transpose();  // L x d_c
    trace.logits.row(b) =
        (params.output_w.cwiseProduct(tr.context).rowwise().sum() + params.output_bias).transpose();
    trace.docs.push_back(std::move(tr));
  }
  finish_trace(trace);
  return trace;
}

ForwardTrace forward(const ModelParams& params, const Batch& batch, Dropout dropout) {
  return params.arch == Arch::kCnn ? forward_cnn(params, batch, dropout)
                                   : forward_caml(params, batch, dropout);
}

ModelParams backward(const ModelParams& params, const ForwardTrace& trace, const Matrix& targets) {
  check_params(params);
  if (trace.arch != params.arch) throw ShapeError("backward: trace and model architectures differ");
  if (idx(trace.docs.size()) != trace.logits.rows() || targets.rows() != trace.logits.rows() ||
      targets.cols() != params.output_w.rows() || trace.logits.cols() != params.output_w.rows()) {
    throw ShapeError("backward: trace, targets and model disagree in shape");
  }
  const std::size_t kernel = kernel_of(params);
  const Padding pad = padding_for(params);
  const Index d = params.embedding.cols();

  ModelParams grad = ModelParams::zeros(params.shape());
  for (Index b = 0; b < trace.logits.rows(); ++b) {
    const DocTrace& tr = trace.docs[static_cast<std::size_t>(b)];
    if (tr.embedded.rows() != d) throw ShapeError("backward: trace does not belong to this model");
    const Vector g = (trace.probabilities.row(b) - targets.row(b)).transpose();  // dLoss/dlogit
    grad.output_bias += g;

    Matrix d_hidden;
    if (params.arch == Arch::kCnn) {
      grad.output_w.noalias() += g * tr.pooled.transpose();
      const Vector d_pooled = params.output_w.transpose() * g;
      d_hidden = Matrix::Zero(tr.hidden.rows(), tr.hidden.cols());
      for (Index f = 0; f < d_hidden.rows(); ++f) {
        d_hidden(f, tr.argmax[static_cast<std::size_t>(f)]) = d_pooled(f);
      }
    } else {
      grad.output_w += g.asDiagonal() * tr.context;
      const Matrix d_context = g.asDiagonal() * params.output_w;  // L x d_c
      d_hidden = d_context.transpose() * tr.attention;            // d_c x T
      const Matrix d_attention = d_context * tr.hidden;            // L x T
      const Vector weighted = tr.attention.cwiseProduct(d_attention).rowwise().sum();
      const Matrix d_scores =
          tr.attention.cwiseProduct(d_attention.colwise() - weighted);  // softmax Jacobian
      grad.attention_u.noalias() += d_scores * tr.hidden.transpose();
      d_hidden.noalias() += params.attention_u.transpose() * d_scores;
    }

    const Matrix d_pre = d_hidden.cwiseProduct((1.0 - tr.hidden.array().square()).matrix());
    const Matrix cols = im2col(tr.embedded, kernel, pad);
    grad.conv_weight.noalias() += d_pre * cols.transpose();
    grad.conv_bias += d_pre.rowwise().sum();
    const Matrix d_cols = params.conv_weight.transpose() * d_pre;
    const Matrix d_embedded =
        col2im(d_cols, d, tr.embedded.cols(), kernel, pad).cwiseProduct(tr.mask);
    for (Index t = 0; t < d_embedded.cols(); ++t) {
      grad.embedding.row(tr.tokens[static_cast<std::size_t>(t)]) += d_embedded.col(t).transpose();
    }
  }
  grad.embedding.row(Vocabulary::kPad).setZero();
  return grad;
}

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'T', 'N', 'L', 'A', 'B', '0', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                                     static_cast<char>((v >> 16) & 0xFF),
                                     static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw ParseError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint32_t narrow_u32(std::size_t v) {
  if (v > 0xFFFFFFFFu) throw ShapeError("dimension does not fit a u32 checkpoint field");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  check_params(params);
  const ModelShape s = params.shape();
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(s.arch));
  for (std::size_t v : {s.vocab_size, s.embed_dim, s.filters, s.kernel, s.labels}) {
    put_u32(out, narrow_u32(v));
  }
  for_each_array(params, [&](std::string_view, std::span<const double> values) {
    for (double v : values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  });
  if (!out) throw IoError("checkpoint write failed");
}

ModelParams read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw ParseError("not an ATNLAB01 checkpoint");
  }
  const std::uint32_t arch = get_u32(in);
  if (arch > 1) throw ParseError("checkpoint: unknown architecture code " + std::to_string(arch));
  ModelShape s;
  s.arch = static_cast<Arch>(arch);
  s.vocab_size = get_u32(in);
  s.embed_dim = get_u32(in);
  s.filters = get_u32(in);
  s.kernel = get_u32(in);
  s.labels = get_u32(in);
  if (s.vocab_size < 2 || s.embed_dim == 0 || s.filters == 0 || s.kernel == 0 || s.labels == 0) {
    throw ParseError("checkpoint: zero dimension in header");
  }
  ModelParams p = ModelParams::zeros(s);
  for_each_array(p, [&](std::string_view, std::span<double> values) {
    for (double& v : values) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  });
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("checkpoint: trailing bytes");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_checkpoint(in);
}

ModelParams round_to_float32(const ModelParams& params) {
  ModelParams out = params;
  for_each_array(out, [](std::string_view, std::span<double> values) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
  });
  return out;
}

}  // namespace attnlab
