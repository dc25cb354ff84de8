#include "ssnmt/model.hpp"

#include <cmath>
#include <unordered_map>
#include <utility>

#include "ssnmt/ops.hpp"

namespace ssnmt {
namespace {

constexpr Real kMaskValue = -1e9;

std::string block_name(const char* side, std::size_t i) {
  return std::string(side) + ".block" + std::to_string(i);
}

std::vector<Real> sinusoid_table(std::size_t positions, std::size_t d) {
  std::vector<Real> table(positions * d);
  for (std::size_t pos = 0; pos < positions; ++pos)
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      table[pos * d + i] = static_cast<Real>(std::sin(static_cast<double>(pos) * freq));
      if (i + 1 < d) table[pos * d + i + 1] = static_cast<Real>(std::cos(static_cast<double>(pos) * freq));
    }
  return table;
}

class Forward {
 public:
  Forward(const TransformerParams& params, bool train, Rng* rng)
      : p_(params), cfg_(params.config()), train_(train), rng_(rng) {
    if (train_ && rng_ == nullptr) throw Error("forward: train mode requires an rng");
  }

  Tensor drop(const Tensor& x) {
    if (!train_) return x;
    return ops::dropout(x, static_cast<Real>(cfg_.dropout), *rng_, true);
  }

  Tensor linear(const Tensor& x, const std::string& prefix) {
    return ops::add_bias(ops::matmul(x, p_.at(prefix + ".w")), p_.at(prefix + ".b"));
  }

  Tensor linear_no_bias(const Tensor& x, const std::string& prefix) {
    return ops::matmul(x, p_.at(prefix + ".w"));
  }

  Tensor norm(const Tensor& x, const std::string& prefix) {
    return ops::layer_norm(x, p_.at(prefix + ".gain"), p_.at(prefix + ".bias"));
  }

  // ids [rows, cols] -> [rows, cols, d] scaled embeddings plus positions.
  Tensor embed(const std::string& table, const PaddedIds& ids) {
    const std::size_t d = cfg_.d_model;
    if (ids.cols > cfg_.max_positions)
      throw ShapeError("embed: sequence length " + std::to_string(ids.cols) +
                       " exceeds max_positions " + std::to_string(cfg_.max_positions));
    Tensor e = ops::scale(ops::embed(p_.at(table), ids.ids), std::sqrt(static_cast<Real>(d)));
    std::vector<Real> pos(ids.rows * ids.cols * d);
    const auto& tab = p_.positions();
    for (std::size_t r = 0; r < ids.rows; ++r)
      for (std::size_t c = 0; c < ids.cols; ++c)
        std::copy_n(tab.begin() + static_cast<std::ptrdiff_t>(c * d), d,
                    pos.begin() + static_cast<std::ptrdiff_t>((r * ids.cols + c) * d));
    Tensor x = ops::add(e, Tensor(e.shape(), std::move(pos)));
    return drop(ops::reshape(x, Shape{ids.rows, ids.cols, d}));
  }

  Tensor attention(const Tensor& q_in, const Tensor& kv_in, const std::string& prefix,
                   const std::vector<std::uint8_t>& mask) {
    const std::size_t heads = cfg_.num_heads;
    const std::size_t depth = cfg_.d_model / heads;
    Tensor q = ops::split_heads(linear(q_in, prefix + ".q"), heads);
    Tensor k = ops::split_heads(linear_no_bias(kv_in, prefix + ".k"), heads);
    Tensor v = ops::split_heads(linear(kv_in, prefix + ".v"), heads);
    Tensor scores = ops::scale(ops::batched_matmul(q, k, true),
                               Real{1} / std::sqrt(static_cast<Real>(depth)));
    Tensor probs = ops::softmax(ops::mask_fill(scores, mask, kMaskValue));
    Tensor ctx = ops::merge_heads(ops::batched_matmul(probs, v, false), heads);
    return linear(ctx, prefix + ".o");
  }

  Tensor feed_forward(const Tensor& x, const std::string& prefix) {
    return linear(drop(ops::relu(linear(x, prefix + ".ffn1"))), prefix + ".ffn2");
  }

  // Key-padding mask [B*H, q_len, k_len] from the key ids; optionally causal.
  std::vector<std::uint8_t> make_mask(const PaddedIds& keys, std::size_t q_len, bool causal) const {
    const std::size_t heads = cfg_.num_heads;
    const std::size_t k_len = keys.cols;
    std::vector<std::uint8_t> mask(keys.rows * heads * q_len * k_len, 0);
    for (std::size_t b = 0; b < keys.rows; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < q_len; ++i)
          for (std::size_t j = 0; j < k_len; ++j) {
            const bool masked = keys.is_pad(b, j) || (causal && j > i);
            mask[((b * heads + h) * q_len + i) * k_len + j] = masked ? 1 : 0;
          }
    return mask;
  }

  Tensor encode(const PaddedIds& src) {
    Tensor x = embed("enc.embed", src);
    const auto mask = make_mask(src, src.cols, false);
    for (std::size_t i = 0; i < cfg_.num_blocks; ++i) {
      const std::string b = block_name("enc", i);
      Tensor h = norm(x, b + ".ln1");
      x = ops::add(x, drop(attention(h, h, b + ".self", mask)));
      x = ops::add(x, drop(feed_forward(norm(x, b + ".ln2"), b)));
    }
    return norm(x, "enc.ln_final");
  }

  Tensor decode(const Tensor& memory, const PaddedIds& src, const PaddedIds& tgt_in) {
    if (memory.rank() != 3 || memory.dim(0) != src.rows || memory.dim(1) != src.cols ||
        tgt_in.rows != src.rows)
      throw ShapeError("decode: encoder states " + shape_str(memory.shape()) +
                       " do not match source [" + std::to_string(src.rows) + "," +
                       std::to_string(src.cols) + "] and target rows " + std::to_string(tgt_in.rows));
    Tensor y = embed("dec.embed", tgt_in);
    const auto self_mask = make_mask(tgt_in, tgt_in.cols, true);
    const auto cross_mask = make_mask(src, tgt_in.cols, false);
    for (std::size_t i = 0; i < cfg_.num_blocks; ++i) {
      const std::string b = block_name("dec", i);
      Tensor h = norm(y, b + ".ln1");
      y = ops::add(y, drop(attention(h, h, b + ".self", self_mask)));
      y = ops::add(y, drop(attention(norm(y, b + ".ln2"), memory, b + ".cross", cross_mask)));
      y = ops::add(y, drop(feed_forward(norm(y, b + ".ln3"), b)));
    }
    y = norm(y, "dec.ln_final");
    const std::size_t vocab = p_.tgt_vocab_size();
    if (!cfg_.tied_embeddings) return linear(y, "dec.out");
    const std::size_t n = tgt_in.rows * tgt_in.cols;
    Tensor flat = ops::reshape(y, Shape{1, n, cfg_.d_model});
    Tensor table = ops::reshape(p_.at("dec.embed"), Shape{1, vocab, cfg_.d_model});
    Tensor logits = ops::batched_matmul(flat, table, true);
    return ops::add_bias(ops::reshape(logits, Shape{tgt_in.rows, tgt_in.cols, vocab}),
                         p_.at("dec.out.b"));
  }

 private:
  const TransformerParams& p_;
  const TransformerConfig& cfg_;
  bool train_;
  Rng* rng_;
};

}  // namespace

TransformerConfig TransformerConfig::paper_preset() {
  TransformerConfig c;
  c.num_blocks = 4;
  c.num_heads = 8;
  c.d_model = 1024;
  c.d_ffn = 2048;
  c.dropout = 0.2;
  return c;
}

void TransformerConfig::validate() const {
  if (num_blocks == 0) throw ConfigError("num_blocks", "model: num_blocks must be >= 1");
  if (num_heads == 0 || d_model % num_heads != 0)
    throw ConfigError("num_heads", "model: d_model " + std::to_string(d_model) +
                                       " is not divisible by num_heads " + std::to_string(num_heads));
  if (d_ffn == 0) throw ConfigError("d_ffn", "model: d_ffn must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout", "model: dropout must be in [0, 1)");
  if (max_positions == 0) throw ConfigError("max_positions", "model: max_positions must be >= 1");
}

TransformerParams::TransformerParams(TransformerConfig config, std::size_t src_vocab,
                                     std::size_t tgt_vocab)
    : config_(config),
      src_vocab_(src_vocab),
      tgt_vocab_(tgt_vocab),
      positions_(sinusoid_table(config.max_positions, config.d_model)) {
  config_.validate();
}

const Tensor& TransformerParams::at(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw Error("params: no tensor named '" + std::string(name) + "'");
}

Tensor& TransformerParams::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

bool TransformerParams::contains(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

void TransformerParams::add(std::string name, Tensor tensor) {
  if (contains(name)) throw Error("params: duplicate tensor '" + name + "'");
  params_.push_back({std::move(name), std::move(tensor)});
}

TransformerParams TransformerParams::clone() const {
  TransformerParams copy(config_, src_vocab_, tgt_vocab_);
  for (const auto& p : params_) {
    Tensor t = p.tensor.clone();
    t.set_requires_grad(p.tensor.requires_grad());
    copy.params_.push_back({p.name, std::move(t)});
  }
  return copy;
}

std::size_t TransformerParams::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

bool TransformerParams::compatible_with(const TransformerParams& other) const {
  if (!(config_ == other.config_) || src_vocab_ != other.src_vocab_ ||
      tgt_vocab_ != other.tgt_vocab_ || params_.size() != other.params_.size())
    return false;
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name != other.params_[i].name ||
        params_[i].tensor.shape() != other.params_[i].tensor.shape())
      return false;
  return true;
}

TransformerParams init_params(const TransformerConfig& config, std::size_t src_vocab,
                              std::size_t tgt_vocab, std::uint64_t seed) {
  TransformerParams params(config, src_vocab, tgt_vocab);
  Rng rng(seed);
  const std::size_t d = config.d_model;

  auto weight = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-s, s);
    std::vector<Real> data(rows * cols);
    for (auto& v : data) v = static_cast<Real>(dist(rng));
    params.add(name, Tensor(Shape{rows, cols}, std::move(data)).set_requires_grad(true));
  };
  auto vec = [&](const std::string& name, std::size_t n, Real fill) {
    params.add(name, Tensor(Shape{n}, fill).set_requires_grad(true));
  };
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    weight(prefix + ".w", in, out);
    vec(prefix + ".b", out, 0);
  };
  auto norm = [&](const std::string& prefix) {
    vec(prefix + ".gain", d, 1);
    vec(prefix + ".bias", d, 0);
  };
  auto attention = [&](const std::string& prefix) {
    linear(prefix + ".q", d, d);
    // A key bias shifts every score in a row equally, which softmax ignores.
    weight(prefix + ".k.w", d, d);
    linear(prefix + ".v", d, d);
    linear(prefix + ".o", d, d);
  };
  auto ffn = [&](const std::string& prefix) {
    linear(prefix + ".ffn1", d, config.d_ffn);
    linear(prefix + ".ffn2", config.d_ffn, d);
  };

  weight("enc.embed", src_vocab, d);
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    const std::string b = block_name("enc", i);
    norm(b + ".ln1");
    attention(b + ".self");
    norm(b + ".ln2");
    ffn(b);
  }
  norm("enc.ln_final");

  weight("dec.embed", tgt_vocab, d);
  for (std::size_t i = 0; i < config.num_blocks; ++i) {
    const std::string b = block_name("dec", i);
    norm(b + ".ln1");
    attention(b + ".self");
    norm(b + ".ln2");
    attention(b + ".cross");
    norm(b + ".ln3");
    ffn(b);
  }
  norm("dec.ln_final");
  if (config.tied_embeddings)
    vec("dec.out.b", tgt_vocab, 0);
  else
    linear("dec.out", d, tgt_vocab);
  return params;
}

Tensor encode(const TransformerParams& params, const PaddedIds& src, bool train, Rng* rng) {
  return Forward(params, train, rng).encode(src);
}

Tensor decode(const TransformerParams& params, const Tensor& memory, const PaddedIds& src,
              const PaddedIds& tgt_in, bool train, Rng* rng) {
  return Forward(params, train, rng).decode(memory, src, tgt_in);
}

Tensor forward_teacher_forced(const TransformerParams& params, const PaddedIds& src,
                              const PaddedIds& tgt_in, bool train, Rng* rng) {
  Forward f(params, train, rng);
  return f.decode(f.encode(src), src, tgt_in);
}

}  // namespace ssnmt
