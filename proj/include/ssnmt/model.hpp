#pragma once

// Pre-layer-norm Transformer encoder-decoder with sinusoidal positions.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ssnmt/common.hpp"
#include "ssnmt/corpus.hpp"
#include "ssnmt/tensor.hpp"

namespace ssnmt {

struct TransformerConfig {
  std::size_t num_blocks = 2;
  std::size_t num_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ffn = 128;
  double dropout = 0.2;
  std::size_t max_positions = 256;
  bool tied_embeddings = false;

  // 4 blocks, 8 heads, 1024/2048, dropout 0.2.
  static TransformerConfig paper_preset();
  // Throws ConfigError on an invalid combination.
  void validate() const;
  bool operator==(const TransformerConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

class TransformerParams {
 public:
  TransformerParams(TransformerConfig config, std::size_t src_vocab, std::size_t tgt_vocab);

  const TransformerConfig& config() const { return config_; }
  std::size_t src_vocab_size() const { return src_vocab_; }
  std::size_t tgt_vocab_size() const { return tgt_vocab_; }

  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  bool contains(std::string_view name) const;
  ParamList& entries() { return params_; }
  const ParamList& entries() const { return params_; }
  void add(std::string name, Tensor tensor);

  // Sinusoidal table [max_positions, d_model]; not trainable.
  const std::vector<Real>& positions() const { return positions_; }

  // Deep copy; the copy's tensors require grad like the originals.
  TransformerParams clone() const;
  std::size_t num_scalars() const;
  // Same config, vocab sizes, names and shapes.
  bool compatible_with(const TransformerParams& other) const;

 private:
  TransformerConfig config_;
  std::size_t src_vocab_;
  std::size_t tgt_vocab_;
  ParamList params_;
  std::vector<Real> positions_;
};

// Weights ~ U(-s, s), s = sqrt(6 / (fan_in + fan_out)); biases 0; layer-norm
// gains 1. Deterministic in the seed.
TransformerParams init_params(const TransformerConfig& config, std::size_t src_vocab,
                              std::size_t tgt_vocab, std::uint64_t seed);

// Dropout is drawn from `rng` when train is set; rng may be null otherwise.
// Returns encoder states [batch, src_len, d_model].
Tensor encode(const TransformerParams& params, const PaddedIds& src, bool train, Rng* rng);

// Decoder over precomputed encoder states. Returns logits [batch, tgt_len, V].
Tensor decode(const TransformerParams& params, const Tensor& memory, const PaddedIds& src,
              const PaddedIds& tgt_in, bool train, Rng* rng);

Tensor forward_teacher_forced(const TransformerParams& params, const PaddedIds& src,
                              const PaddedIds& tgt_in, bool train, Rng* rng);

}  // namespace ssnmt
