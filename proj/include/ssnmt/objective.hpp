#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ssnmt/common.hpp"
#include "ssnmt/corpus.hpp"
#include "ssnmt/decode.hpp"
#include "ssnmt/model.hpp"
#include "ssnmt/tensor.hpp"

namespace ssnmt {

// Per-position distributions over the target vocabulary. Rows with
// valid[t] == 0 are ignored.
struct TokenDistributionSeq {
  std::size_t length = 0;
  std::size_t vocab = 0;
  std::vector<Real> probs;  // [length, vocab]
  std::vector<std::uint8_t> valid;

  std::span<const Real> row(std::size_t t) const { return {probs.data() + t * vocab, vocab}; }
  // Throws Error unless every valid row is a distribution (sum 1 within 1e-9).
  void check() const;
};

struct LossWeights {
  double lambda1 = 0.5;
  double lambda2 = 0.5;
};

inline constexpr double kKlProbFloor = 1e-12;

// Mean over non-pad targets of -sum_v q(v) log p(v), q = (1-eps) onehot + eps/V.
// Throws Error "no valid tokens" when every target is pad.
Tensor label_smoothed_ce(const Tensor& logits, std::span<const TokenId> targets, Real epsilon,
                         TokenId pad = Vocab::kPad);

// Mean over valid positions of KL(teacher || student); student probabilities
// are floored at 1e-12 inside the log.
double token_kl(const TokenDistributionSeq& teacher, const TokenDistributionSeq& student);

// Differentiable form of token_kl: teacher_probs is a constant [N, V],
// student_logits [..., V] with N rows.
Tensor consistency_kl(const Tensor& teacher_probs, const Tensor& student_logits,
                      std::span<const std::uint8_t> valid);

enum class DecoderInput { kForced, kPseudo };

struct ConsistencyBranches {
  Tensor teacher_probs;   // [N, V], computed without recording
  Tensor student_logits;  // [B, T, V], recorded when a tape is active
  std::vector<std::uint8_t> valid;  // N = B*T flags
  std::size_t skipped = 0;          // pseudo mode: examples whose decode hit the cap

  TokenDistributionSeq teacher() const;
  TokenDistributionSeq student() const;
  bool empty() const { return valid.empty(); }
};

// Teacher = clean source x, no dropout, no gradient. Student = augmented
// source u (dropout when train). Both share the decoder input: [bos, y] in
// forced mode, [bos, greedy(x)] in pseudo mode.
ConsistencyBranches consistency_pass(const TransformerParams& params, const Batch& batch,
                                     DecoderInput mode, bool train, Rng* rng,
                                     const DecodeConfig& pseudo_decode = {});

Tensor combined_loss(const Tensor& ce, const Tensor& kl, const LossWeights& w);
double combined_loss(double ce, double kl, const LossWeights& w);

}  // namespace ssnmt
