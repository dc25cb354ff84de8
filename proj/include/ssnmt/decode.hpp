#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ssnmt/common.hpp"
#include "ssnmt/io.hpp"
#include "ssnmt/model.hpp"
#include "ssnmt/subword.hpp"

namespace ssnmt {

struct DecodeConfig {
  std::size_t beam_size = 5;
  double length_penalty = 0.6;
  // Output cap is max_len_factor * src_len + max_len_const steps, unless
  // max_len is non-zero, which overrides it.
  double max_len_factor = 2.0;
  std::size_t max_len_const = 10;
  std::size_t max_len = 0;

  void validate() const;
};

std::size_t max_output_length(std::size_t src_len, const DecodeConfig& cfg);

// GNMT length normalizer ((5 + n) / 6)^alpha.
double length_penalty(std::size_t length, double alpha);

struct DecodeResult {
  std::vector<TokenId> tokens;  // generated ids, including the final eos if produced
  double logprob = 0.0;
  double score = 0.0;           // logprob / length_penalty(tokens.size())
  bool hit_cap = false;         // stopped by the length cap without eos
};

// Next-token log-probabilities for each prefix (all prefixes have equal
// length and exclude bos). Entries may be -inf for forbidden tokens.
using StepScorer =
    std::function<std::vector<std::vector<Real>>(const std::vector<std::vector<TokenId>>&)>;

// Argmax token per step, lowest id on ties.
DecodeResult greedy_search(const StepScorer& scorer, std::size_t max_len, TokenId eos);

// Beam search over cumulative log-probability. Hypotheses that emit eos or
// reach max_len are finished and ranked by logprob / lp(len); ties prefer the
// shorter, then the lexicographically smaller id sequence.
DecodeResult beam_search(const StepScorer& scorer, std::size_t max_len, TokenId eos,
                         std::size_t beam_size, double alpha);

// Scorer over a trained model for one source sentence (ids ending in eos).
// pad and bos are never proposed.
StepScorer model_scorer(const TransformerParams& params, const std::vector<TokenId>& src);

DecodeResult greedy_decode(const TransformerParams& params, const std::vector<TokenId>& src,
                           const DecodeConfig& cfg);
// Greedy decoding of many sentences at once; identical to greedy_decode per row.
std::vector<DecodeResult> greedy_decode_batch(const TransformerParams& params,
                                              const std::vector<std::vector<TokenId>>& srcs,
                                              const DecodeConfig& cfg);
DecodeResult beam_search(const TransformerParams& params, const std::vector<TokenId>& src,
                         const DecodeConfig& cfg);

// Drops a trailing eos.
std::vector<TokenId> strip_eos(const std::vector<TokenId>& tokens);

// A trained model bundled with its subword table and vocabularies.
class Translator {
 public:
  Translator(TransformerParams params, MergeTable src_table, Vocab src_vocab, Vocab tgt_vocab);

  // beam_size == 1 uses greedy decoding.
  Words translate(const Words& sentence, const DecodeConfig& cfg) const;
  // Sentences decode concurrently; output order matches input order.
  std::vector<Words> translate_all(const std::vector<Words>& sentences, const DecodeConfig& cfg) const;

  const TransformerParams& params() const { return params_; }
  const Vocab& src_vocab() const { return src_vocab_; }
  const Vocab& tgt_vocab() const { return tgt_vocab_; }
  const MergeTable& src_table() const { return src_table_; }
  Words ids_to_words(const std::vector<TokenId>& ids) const;

 private:
  TransformerParams params_;
  MergeTable src_table_;
  Vocab src_vocab_;
  Vocab tgt_vocab_;
};

}  // namespace ssnmt
