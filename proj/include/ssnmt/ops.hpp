#pragma once

// Differentiable tensor ops. Each op records a backward node on the active
// tape when any input requires grad; otherwise it is a plain computation.
// Shape mismatches throw ShapeError naming the op and the offending shapes.

#include <cstdint>
#include <span>
#include <vector>

#include "ssnmt/common.hpp"
#include "ssnmt/tensor.hpp"

namespace ssnmt::ops {

// While alive, relu and clamp_min on this thread fold the on/off state of
// every input element into signature(). Two evaluations with equal
// signatures stayed on the same linear piece of every kink.
class KinkMonitor {
 public:
  KinkMonitor();
  ~KinkMonitor();
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;

  std::uint64_t signature() const { return hash_; }
  static KinkMonitor* active();
  void fold(bool on);

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
  KinkMonitor* previous_;
};

// x[..., K] * w[K, N] -> [..., N]
Tensor matmul(const Tensor& x, const Tensor& w);
// a[G, M, K] * b[G, K, N] -> [G, M, N]; with transpose_b, b is [G, N, K].
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b);

Tensor add(const Tensor& a, const Tensor& b);
// Bias over the last dimension; the only broadcast supported.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
Tensor relu(const Tensor& x);
Tensor clamp_min(const Tensor& x, Real floor);

Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = 1e-5);

// Rows of table[V, d] for each id -> [ids.size(), d].
Tensor embed(const Tensor& table, std::span<const TokenId> ids);

// Inverted dropout: survivors scaled by 1/(1-p). Identity when !train or p == 0.
Tensor dropout(const Tensor& x, Real p, Rng& rng, bool train);

// Positions with mask[i] != 0 are replaced by value; mask has x.numel() entries.
Tensor mask_fill(const Tensor& x, std::span<const std::uint8_t> mask, Real value);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
// Concatenation along the leading dimension.
Tensor concat(const std::vector<Tensor>& parts);

// [B, T, H*D] -> [B*H, T, D] and back.
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x, std::size_t heads);

}  // namespace ssnmt::ops
