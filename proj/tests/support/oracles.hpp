#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "ssnmt/decode.hpp"
#include "ssnmt/objective.hpp"
#include "ssnmt/ops.hpp"

namespace testing {

constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();

// Deterministic pseudo-model: the next-token distribution is a fixed random
// function of the prefix. Token 0 is forbidden.
inline StepScorer hashed_scorer(std::size_t vocab, std::uint64_t seed) {
  return [vocab, seed](const std::vector<std::vector<TokenId>>& prefixes) {
    std::vector<std::vector<Real>> out;
    for (const auto& p : prefixes) {
      std::uint64_t h = seed;
      for (TokenId t : p) h = h * 1000003u + static_cast<std::uint64_t>(t) + 7;
      Rng rng(h);
      std::normal_distribution<double> n(0, 2);
      std::vector<double> z(vocab);
      double m = -1e300;
      for (std::size_t v = 1; v < vocab; ++v) m = std::max(m, z[v] = n(rng));
      double s = 0;
      for (std::size_t v = 1; v < vocab; ++v) s += std::exp(z[v] - m);
      std::vector<Real> lp(vocab);
      lp[0] = kNegInf;
      for (std::size_t v = 1; v < vocab; ++v) lp[v] = z[v] - m - std::log(s);
      out.push_back(lp);
    }
    return out;
  };
}

struct Brute {
  std::vector<TokenId> tokens;
  double logprob = 0;
  double score = -1e300;
};

inline void enumerate(const StepScorer& scorer, std::vector<TokenId>& prefix, double lp, std::size_t max_len,
               TokenId eos, double alpha, Brute& best) {
  const auto next = scorer({prefix})[0];
  for (std::size_t v = 0; v < next.size(); ++v) {
    if (next[v] == kNegInf) continue;
    prefix.push_back(static_cast<TokenId>(v));
    const double total = lp + next[v];
    if (static_cast<TokenId>(v) == eos || prefix.size() == max_len) {
      const double score = total / std::pow((5.0 + static_cast<double>(prefix.size())) / 6.0, alpha);
      const bool better = score > best.score ||
                          (score == best.score && (prefix.size() < best.tokens.size() ||
                                                   (prefix.size() == best.tokens.size() && prefix < best.tokens)));
      if (better) best = {prefix, total, score};
    } else {
      enumerate(scorer, prefix, total, max_len, eos, alpha, best);
    }
    prefix.pop_back();
  }
}

// Independent oracle: counts n-grams by brute-force string comparison.
inline double brute_bleu(const std::vector<Words>& hyps, const std::vector<Words>& refs, bool smooth) {
  double log_sum = 0;
  bool zero = false;
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += hyps[i].size();
    ref_len += refs[i].size();
  }
  for (std::size_t n = 1; n <= 4; ++n) {
    double match = 0, total = 0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      const auto& h = hyps[i];
      const auto& r = refs[i];
      if (h.size() < n) continue;
      std::vector<bool> used_h(h.size(), false);
      for (std::size_t a = 0; a + n <= h.size(); ++a) {
        total += 1;
        // count occurrences of this gram in h up to position a, and in r
        std::size_t in_h = 0, in_r = 0;
        for (std::size_t b = 0; b <= a; ++b)
          if (std::equal(h.begin() + a, h.begin() + a + n, h.begin() + b)) ++in_h;
        for (std::size_t b = 0; b + n <= r.size(); ++b)
          if (std::equal(h.begin() + a, h.begin() + a + n, r.begin() + b)) ++in_r;
        if (in_h <= in_r) match += 1;
      }
    }
    if (smooth && n > 1) {
      match += 1;
      total += 1;
    }
    if (match == 0 || total == 0) zero = true;
    else log_sum += std::log(match / total) / 4;
  }
  if (zero || hyp_len == 0) return 0.0;
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  return 100.0 * bp * std::exp(log_sum);
}

inline std::vector<Words> random_corpus(std::size_t n, Rng& rng) {
  std::uniform_int_distribution<int> len(0, 8), tok(0, 3);
  std::vector<Words> c(n);
  for (auto& s : c) {
    const int l = len(rng);
    for (int i = 0; i < l; ++i) s.push_back(std::string(1, static_cast<char>('a' + tok(rng))));
  }
  return c;
}

inline TokenDistributionSeq seq_of(std::vector<std::vector<Real>> rows) {
  TokenDistributionSeq s;
  s.length = rows.size();
  s.vocab = rows.front().size();
  for (auto& r : rows) s.probs.insert(s.probs.end(), r.begin(), r.end());
  s.valid.assign(s.length, 1);
  return s;
}

inline std::vector<Real> random_distribution(std::size_t n, Rng& rng) {
  std::gamma_distribution<double> g(0.5, 1.0);
  std::vector<Real> p(n);
  double total = 0;
  for (auto& v : p) total += (v = g(rng) + 1e-300);
  for (auto& v : p) v /= total;
  return p;
}

// Teacher distributions [N, V] of the clean source, computed without recording.
inline Tensor teacher_probs_at(const TransformerParams& p, const ToyBatch& b) {
  const std::size_t vocab = p.tgt_vocab_size();
  NoGradScope off;
  Tensor logits = forward_teacher_forced(p, b.src, b.tgt_in, false, nullptr);
  return ops::softmax(ops::reshape(logits, Shape{logits.numel() / vocab, vocab}));
}

}  // namespace testing
