#include "inceptive/encoder.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "inceptive/error.hpp"
#include "inceptive/ops.hpp"
#include "inceptive/serialize.hpp"

namespace inceptive {

void EncoderConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("vocab_size: must be positive");
  if (hidden_dim < 2) throw ConfigError("d: encoder hidden size must be at least 2");
  if (n_layers > 0) {
    if (n_heads == 0 || hidden_dim % n_heads != 0) throw ConfigError("encoder_heads: must divide d");
    if (ffn_size == 0) throw ConfigError("ffn_size: must be positive");
  }
  if (max_len == 0) throw ConfigError("max_len: must be positive");
}

TokenBatch TokenBatch::from(std::span<const TokenSequence> sequences) {
  if (sequences.empty()) throw InputError("embed: empty batch");
  TokenBatch tb;
  tb.batch = sequences.size();
  tb.length = sequences.front().token_ids.size();
  tb.ids.reserve(tb.batch * tb.length);
  for (const TokenSequence& s : sequences) {
    if (s.token_ids.size() != tb.length) throw InputError("embed: sequences in a batch must share one length");
    tb.ids.insert(tb.ids.end(), s.token_ids.begin(), s.token_ids.end());
  }
  return tb;
}

namespace {

std::string block_name(std::size_t i) { return "encoder.block" + std::to_string(i); }

}  // namespace

ParamStore init_encoder_params(const EncoderConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.hidden_dim;
  ParamStore params;
  params.add("encoder.token_embedding", glorot_uniform({config.vocab_size, d}, config.vocab_size, d, rng));
  params.add("encoder.position_embedding", glorot_uniform({config.max_len, d}, config.max_len, d, rng));
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    const std::string p = block_name(i);
    params.add(p + ".norm1.scale", Tensor({d}, 1.0), false);
    params.add(p + ".norm1.shift", Tensor({d}), false);
    add_attention_params(params, p + ".attention", config.n_heads, d, d / config.n_heads, d, rng);
    params.add(p + ".norm2.scale", Tensor({d}, 1.0), false);
    params.add(p + ".norm2.shift", Tensor({d}), false);
    params.add(p + ".ffn.w1", glorot_uniform({d, config.ffn_size}, d, config.ffn_size, rng));
    params.add(p + ".ffn.b1", Tensor({config.ffn_size}), false);
    params.add(p + ".ffn.w2", glorot_uniform({config.ffn_size, d}, config.ffn_size, d, rng));
    params.add(p + ".ffn.b2", Tensor({d}), false);
  }
  return params;
}

Tensor embed(const EncoderConfig& config, const ParamStore& params, const TokenBatch& tokens) {
  if (tokens.batch == 0 || tokens.length == 0) throw InputError("embed: empty batch");
  if (tokens.length > config.max_len) {
    throw InputError("embed: sequence length " + std::to_string(tokens.length) + " exceeds max_len " +
                     std::to_string(config.max_len));
  }
  const std::size_t d = config.hidden_dim;
  const Tensor& tok = params.value("encoder.token_embedding");
  const Tensor& pos = params.value("encoder.position_embedding");
  Tensor X({tokens.batch, tokens.length, d});
  for (std::size_t b = 0; b < tokens.batch; ++b) {
    for (std::size_t i = 0; i < tokens.length; ++i) {
      const std::uint32_t id = tokens.ids[b * tokens.length + i];
      if (id >= config.vocab_size) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(config.vocab_size));
      }
      double* x = X.raw() + (b * tokens.length + i) * d;
      const double* t = tok.raw() + static_cast<std::size_t>(id) * d;
      const double* p = pos.raw() + i * d;
      for (std::size_t j = 0; j < d; ++j) x[j] = t[j] + p[j];
    }
  }
  return X;
}

Tensor embed(const EncoderConfig& config, const ParamStore& params, std::span<const TokenSequence> batch) {
  return embed(config, params, TokenBatch::from(batch));
}

void embed_backward(const EncoderConfig& config, ParamStore& params, const TokenBatch& tokens, const Tensor& dX) {
  const std::size_t d = config.hidden_dim;
  Tensor& dtok = params.grad("encoder.token_embedding");
  Tensor& dpos = params.grad("encoder.position_embedding");
  for (std::size_t b = 0; b < tokens.batch; ++b) {
    for (std::size_t i = 0; i < tokens.length; ++i) {
      const std::uint32_t id = tokens.ids[b * tokens.length + i];
      const double* g = dX.raw() + (b * tokens.length + i) * d;
      double* t = dtok.raw() + static_cast<std::size_t>(id) * d;
      double* p = dpos.raw() + i * d;
      for (std::size_t j = 0; j < d; ++j) {
        t[j] += g[j];
        p[j] += g[j];
      }
    }
  }
}

EncoderResult encode(const EncoderConfig& config, const ParamStore& params, const Tensor& X) {
  if (X.rank() != 3 || X.dim(2) != config.hidden_dim) {
    throw DimensionError("encode: expected B x L x " + std::to_string(config.hidden_dim) + ", got " +
                         shape_str(X.shape()));
  }
  EncoderResult r;
  Tensor x = X;
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    const std::string p = block_name(i);
    EncoderBlockCache bc;
    bc.input = x;
    LayerNormResult n1 = layer_norm(params.value(p + ".norm1.scale"), params.value(p + ".norm1.shift"), x);
    bc.norm1 = std::move(n1.cache);
    MultiHeadResult attn = multi_head_attention(params, p + ".attention", config.n_heads, n1.y);
    bc.attention = std::move(attn.cache);
    add_inplace(x, attn.out);
    bc.mid = x;
    LayerNormResult n2 = layer_norm(params.value(p + ".norm2.scale"), params.value(p + ".norm2.shift"), x);
    bc.norm2 = std::move(n2.cache);
    bc.norm2_out = std::move(n2.y);
    bc.ffn_pre = linear(params.value(p + ".ffn.w1"), params.value(p + ".ffn.b1"), bc.norm2_out);
    bc.ffn_act = relu(bc.ffn_pre);
    add_inplace(x, linear(params.value(p + ".ffn.w2"), params.value(p + ".ffn.b2"), bc.ffn_act));
    if (i + 1 == config.n_layers) r.last_attention = std::move(attn.weights);
    r.blocks.push_back(std::move(bc));
  }
  r.hidden = std::move(x);
  return r;
}

Tensor encode_backward(const EncoderConfig& config, ParamStore& params, const EncoderResult& forward,
                       const Tensor& dH) {
  Tensor dx = dH;
  for (std::size_t i = config.n_layers; i-- > 0;) {
    const std::string p = block_name(i);
    const EncoderBlockCache& bc = forward.blocks[i];

    // FFN branch; the residual passes dx through unchanged.
    Parameter& w2 = params.at(p + ".ffn.w2");
    LinearGrads g2 = linear_backward(w2.value, bc.ffn_act, dx);
    add_inplace(w2.grad, g2.dw);
    add_inplace(params.grad(p + ".ffn.b2"), g2.db);
    Tensor d_pre = relu_backward(bc.ffn_pre, g2.dx);
    Parameter& w1 = params.at(p + ".ffn.w1");
    LinearGrads g1 = linear_backward(w1.value, bc.norm2_out, d_pre);
    add_inplace(w1.grad, g1.dw);
    add_inplace(params.grad(p + ".ffn.b1"), g1.db);
    Parameter& s2 = params.at(p + ".norm2.scale");
    LayerNormGrads n2 = layer_norm_backward(s2.value, bc.norm2, g1.dx);
    add_inplace(s2.grad, n2.d_scale);
    add_inplace(params.grad(p + ".norm2.shift"), n2.d_shift);
    add_inplace(dx, n2.dx);

    // Attention branch.
    Tensor d_norm1 = multi_head_attention_backward(params, p + ".attention", config.n_heads, bc.attention, dx);
    Parameter& s1 = params.at(p + ".norm1.scale");
    LayerNormGrads n1 = layer_norm_backward(s1.value, bc.norm1, d_norm1);
    add_inplace(s1.grad, n1.d_scale);
    add_inplace(params.grad(p + ".norm1.shift"), n1.d_shift);
    add_inplace(dx, n1.dx);
  }
  return dx;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::uint32_t kEmbeddingVersion = 1;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  const Tensor& H = set.hidden;
  if (H.rank() != 3) throw DimensionError("save_embeddings: expected B x L x d, got " + shape_str(H.shape()));
  if (set.labels.size() != H.dim(0)) throw InputError("save_embeddings: one label per example required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write("IEMB", 4);
  io::write_u32(out, kEmbeddingVersion);
  for (std::size_t axis = 0; axis < 3; ++axis) io::write_u32(out, static_cast<std::uint32_t>(H.dim(axis)));
  io::write_u8(out, static_cast<std::uint8_t>(set.label_kind));
  io::write_u32(out, set.n_labels);
  for (const Label& label : set.labels) {
    if (set.label_kind == LabelKind::class_index) {
      io::write_u32(out, std::get<std::uint32_t>(label));
    } else {
      const auto& bits = std::get<std::vector<std::uint8_t>>(label);
      if (bits.size() != set.n_labels) throw InputError("save_embeddings: indicator length differs from C");
      for (std::uint8_t bit : bits) io::write_u8(out, bit);
    }
  }
  for (double v : H.data()) io::write_f32(out, static_cast<float>(v));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::uint64_t offset = 0;
  io::read_magic(in, offset, "IEMB");
  const std::uint64_t version_at = offset;
  const std::uint32_t version = io::read_u32(in, offset, "version");
  if (version != kEmbeddingVersion) throw FormatError("unsupported IEMB version " + std::to_string(version), version_at);
  std::uint32_t dims[3];
  for (auto& dim : dims) {
    const std::uint64_t at = offset;
    dim = io::read_u32(in, offset, "dimension");
    if (dim == 0) throw FormatError("zero dimension in header", at);
  }
  const std::uint64_t kind_at = offset;
  const std::uint8_t kind = io::read_u8(in, offset, "label kind");
  if (kind > 1) throw FormatError("unknown label kind " + std::to_string(kind), kind_at);
  EmbeddingSet set;
  set.label_kind = static_cast<LabelKind>(kind);
  set.n_labels = io::read_u32(in, offset, "label count");
  set.labels.reserve(dims[0]);
  for (std::uint32_t b = 0; b < dims[0]; ++b) {
    if (set.label_kind == LabelKind::class_index) {
      const std::uint64_t at = offset;
      const std::uint32_t label = io::read_u32(in, offset, "label");
      if (set.n_labels && label >= set.n_labels) throw FormatError("class index out of range", at);
      set.labels.emplace_back(label);
    } else {
      std::vector<std::uint8_t> bits(set.n_labels);
      for (auto& bit : bits) {
        const std::uint64_t at = offset;
        bit = io::read_u8(in, offset, "label indicator");
        if (bit > 1) throw FormatError("label indicator must be 0 or 1", at);
      }
      set.labels.emplace_back(std::move(bits));
    }
  }
  const Shape shape{dims[0], dims[1], dims[2]};
  std::vector<double> data(numel(shape));
  for (double& v : data) v = io::read_f32(in, offset, "embedding payload");
  set.hidden = Tensor(shape, std::move(data));
  return set;
}

}  // namespace inceptive
