#pragma once

#include <cstring>
#include <random>
#include <vector>

#include "ssnmt/corpus.hpp"
#include "ssnmt/model.hpp"
#include "ssnmt/tensor.hpp"
#include "ssnmt/trainer.hpp"

namespace testing {

using namespace ssnmt;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Real> data(numel_of(shape));
  for (auto& v : data) v = static_cast<Real>(u(rng));
  Tensor t(shape, std::move(data));
  t.set_requires_grad(grad);
  return t;
}

inline TransformerConfig tiny_config() {
  TransformerConfig c;
  c.num_blocks = 1;
  c.num_heads = 2;
  c.d_model = 8;
  c.d_ffn = 16;
  c.dropout = 0.0;
  c.max_positions = 32;
  return c;
}

// Sequences of content ids in [kNumReserved, vocab) of random length in
// [min_len, max_len], each followed by eos.
inline std::vector<std::vector<TokenId>> random_sequences(std::size_t count, std::size_t min_len,
                                                          std::size_t max_len, std::size_t vocab,
                                                          Rng& rng) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::uniform_int_distribution<TokenId> tok(Vocab::kNumReserved, static_cast<TokenId>(vocab - 1));
  std::vector<std::vector<TokenId>> out(count);
  for (auto& s : out) {
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) s.push_back(tok(rng));
    s.push_back(Vocab::kEos);
  }
  return out;
}

// Decoder input/output pair from target sequences ending in eos.
inline std::pair<PaddedIds, PaddedIds> teacher_forcing(const std::vector<std::vector<TokenId>>& tgts) {
  std::vector<std::vector<TokenId>> in, out;
  for (const auto& t : tgts) {
    std::vector<TokenId> i{Vocab::kBos};
    i.insert(i.end(), t.begin(), t.end() - 1);
    in.push_back(std::move(i));
    out.push_back(t);
  }
  return {pad_sequences(in), pad_sequences(out)};
}

}  // namespace testing

namespace testing {

struct ToyBatch {
  PaddedIds src;
  PaddedIds aug;
  PaddedIds tgt_in;
  PaddedIds tgt_out;
};

inline ToyBatch toy_batch(std::size_t rows, std::size_t vocab, Rng& rng) {
  ToyBatch b;
  b.src = pad_sequences(random_sequences(rows, 1, 5, vocab, rng));
  b.aug = pad_sequences(random_sequences(rows, 1, 5, vocab, rng));
  auto [in, out] = teacher_forcing(random_sequences(rows, 1, 4, vocab, rng));
  b.tgt_in = std::move(in);
  b.tgt_out = std::move(out);
  return b;
}

inline std::vector<std::uint8_t> non_pad(const PaddedIds& ids) {
  std::vector<std::uint8_t> v(ids.ids.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = ids.ids[i] != Vocab::kPad;
  return v;
}

}  // namespace testing

namespace testing {

// Copy task over random id sequences: target equals source.
inline TrainData copy_task(std::size_t train_size, std::size_t valid_size, std::size_t vocab,
                           std::uint64_t seed) {
  Rng rng(seed);
  TrainData d;
  d.src_vocab = d.tgt_vocab = vocab;
  for (std::size_t i = 0; i < train_size; ++i) {
    auto s = random_sequences(1, 1, 4, vocab, rng)[0];
    Example e;
    e.id = i;
    e.src = s;
    e.tgt_out = s;
    e.tgt_in = {Vocab::kBos};
    e.tgt_in.insert(e.tgt_in.end(), s.begin(), s.end() - 1);
    d.labeled.push_back(e);
  }
  for (std::size_t i = 0; i < valid_size; ++i) {
    auto s = random_sequences(1, 1, 4, vocab, rng)[0];
    d.valid_src.push_back(s);
    Words ref;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) ref.push_back(std::to_string(s[k]));
    d.valid_refs.push_back(ref);
  }
  d.to_words = [](const std::vector<TokenId>& ids) {
    Words w;
    for (auto t : ids) w.push_back(std::to_string(t));
    return w;
  };
  return d;
}

}  // namespace testing

namespace testing {

// Bitwise equality of every parameter tensor.
inline bool same_params(const TransformerParams& a, const TransformerParams& b) {
  if (!a.compatible_with(b)) return false;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    const auto x = a.entries()[i].tensor.data();
    const auto y = b.entries()[i].tensor.data();
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size_bytes()) != 0) return false;
  }
  return true;
}

}  // namespace testing
