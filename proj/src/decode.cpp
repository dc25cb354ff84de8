#include "ssnmt/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ssnmt/corpus.hpp"
#include "ssnmt/kernels.hpp"
#include "ssnmt/tensor.hpp"

namespace ssnmt {
namespace {

constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();

// Copies rows `rows` of a [N, S, d] tensor into a new [rows.size(), S, d].
Tensor gather_rows(const Tensor& states, const std::vector<std::size_t>& rows) {
  const std::size_t stride = states.dim(1) * states.dim(2);
  std::vector<Real> data(rows.size() * stride);
  auto src = states.data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride), stride,
                data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  return Tensor(Shape{rows.size(), states.dim(1), states.dim(2)}, std::move(data));
}

PaddedIds gather_ids(const PaddedIds& ids, const std::vector<std::size_t>& rows) {
  PaddedIds out;
  out.rows = rows.size();
  out.cols = ids.cols;
  out.ids.reserve(out.rows * out.cols);
  for (auto r : rows)
    out.ids.insert(out.ids.end(), ids.ids.begin() + static_cast<std::ptrdiff_t>(r * ids.cols),
                   ids.ids.begin() + static_cast<std::ptrdiff_t>((r + 1) * ids.cols));
  return out;
}

PaddedIds decoder_inputs(const std::vector<std::vector<TokenId>>& prefixes) {
  std::vector<std::vector<TokenId>> rows;
  rows.reserve(prefixes.size());
  for (const auto& p : prefixes) {
    std::vector<TokenId> r{Vocab::kBos};
    r.insert(r.end(), p.begin(), p.end());
    rows.push_back(std::move(r));
  }
  return pad_sequences(rows);
}

// Log-probabilities at each row's last position, pad and bos forbidden.
std::vector<std::vector<Real>> last_position_logprobs(const Tensor& logits) {
  const std::size_t rows = logits.dim(0), len = logits.dim(1), vocab = logits.dim(2);
  std::vector<std::vector<Real>> out(rows, std::vector<Real>(vocab));
  auto data = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* last = data.data() + (r * len + (len - 1)) * vocab;
    kernels::log_softmax_rows(last, out[r].data(), 1, vocab);
    out[r][Vocab::kPad] = kNegInf;
    if (vocab > static_cast<std::size_t>(Vocab::kBos)) out[r][Vocab::kBos] = kNegInf;
  }
  return out;
}

std::size_t source_length(const std::vector<TokenId>& src) {
  return !src.empty() && src.back() == Vocab::kEos ? src.size() - 1 : src.size();
}

// Lowest id among the maximal finite entries; -1 if none is finite.
TokenId argmax_token(const std::vector<Real>& lp) {
  TokenId best = -1;
  for (std::size_t v = 0; v < lp.size(); ++v) {
    if (lp[v] == kNegInf) continue;
    if (best < 0 || lp[v] > lp[static_cast<std::size_t>(best)]) best = static_cast<TokenId>(v);
  }
  return best;
}

bool better_final(const DecodeResult& a, const DecodeResult& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

void finish(DecodeResult& r, double alpha) {
  r.score = r.logprob / length_penalty(r.tokens.size(), alpha);
}

}  // namespace

void DecodeConfig::validate() const {
  if (beam_size == 0) throw ConfigError("beam_size", "decode: beam_size must be >= 1");
  if (!(length_penalty >= 0.0)) throw ConfigError("length_penalty", "decode: length penalty must be >= 0");
  if (!(max_len_factor >= 0.0)) throw ConfigError("max_len_factor", "decode: max_len_factor must be >= 0");
}

std::size_t max_output_length(std::size_t src_len, const DecodeConfig& cfg) {
  if (cfg.max_len > 0) return cfg.max_len;
  return static_cast<std::size_t>(cfg.max_len_factor * static_cast<double>(src_len)) + cfg.max_len_const;
}

double length_penalty(std::size_t length, double alpha) {
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

std::vector<TokenId> strip_eos(const std::vector<TokenId>& tokens) {
  if (!tokens.empty() && tokens.back() == Vocab::kEos)
    return std::vector<TokenId>(tokens.begin(), tokens.end() - 1);
  return tokens;
}

DecodeResult greedy_search(const StepScorer& scorer, std::size_t max_len, TokenId eos) {
  DecodeResult r;
  r.hit_cap = true;
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto lp = scorer({r.tokens}).at(0);
    const TokenId v = argmax_token(lp);
    if (v < 0) break;
    r.logprob += lp[static_cast<std::size_t>(v)];
    r.tokens.push_back(v);
    if (v == eos) {
      r.hit_cap = false;
      break;
    }
  }
  // Greedy results are scored without a length preference.
  finish(r, 0.0);
  return r;
}

DecodeResult beam_search(const StepScorer& scorer, std::size_t max_len, TokenId eos,
                         std::size_t beam_size, double alpha) {
  if (beam_size == 0) throw Error("beam_search: beam_size must be >= 1");
  struct Live {
    std::vector<TokenId> tokens;
    double logprob;
  };
  struct Candidate {
    double logprob;
    std::size_t parent;
    TokenId token;
  };
  std::vector<Live> live{{{}, 0.0}};
  std::vector<DecodeResult> finished;

  for (std::size_t step = 1; step <= max_len && !live.empty(); ++step) {
    std::vector<std::vector<TokenId>> prefixes;
    prefixes.reserve(live.size());
    for (const auto& h : live) prefixes.push_back(h.tokens);
    const auto lps = scorer(prefixes);

    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live.size(); ++i)
      for (std::size_t v = 0; v < lps[i].size(); ++v)
        if (lps[i][v] != kNegInf)
          cands.push_back({live[i].logprob + lps[i][v], i, static_cast<TokenId>(v)});

    auto before = [&](const Candidate& a, const Candidate& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      const auto& pa = live[a.parent].tokens;
      const auto& pb = live[b.parent].tokens;
      if (pa != pb) return pa < pb;
      return a.token < b.token;
    };
    const std::size_t keep = std::min(beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), before);

    std::vector<Live> next;
    for (std::size_t c = 0; c < keep; ++c) {
      std::vector<TokenId> tokens = live[cands[c].parent].tokens;
      tokens.push_back(cands[c].token);
      if (cands[c].token == eos || step == max_len) {
        DecodeResult r;
        r.tokens = std::move(tokens);
        r.logprob = cands[c].logprob;
        r.hit_cap = cands[c].token != eos;
        finish(r, alpha);
        finished.push_back(std::move(r));
      } else {
        next.push_back({std::move(tokens), cands[c].logprob});
      }
    }
    live = std::move(next);
  }

  if (finished.empty()) return DecodeResult{};
  return *std::min_element(finished.begin(), finished.end(), better_final);
}

StepScorer model_scorer(const TransformerParams& params, const std::vector<TokenId>& src) {
  PaddedIds src_ids = pad_sequences({src});
  Tensor memory;
  {
    NoGradScope no_grad;
    memory = encode(params, src_ids, false, nullptr);
  }
  return [&params, src_ids, memory](const std::vector<std::vector<TokenId>>& prefixes) {
    NoGradScope no_grad;
    const std::vector<std::size_t> rows(prefixes.size(), 0);
    Tensor logits = decode(params, gather_rows(memory, rows), gather_ids(src_ids, rows),
                           decoder_inputs(prefixes), false, nullptr);
    return last_position_logprobs(logits);
  };
}

DecodeResult greedy_decode(const TransformerParams& params, const std::vector<TokenId>& src,
                           const DecodeConfig& cfg) {
  return greedy_search(model_scorer(params, src), max_output_length(source_length(src), cfg),
                       Vocab::kEos);
}

std::vector<DecodeResult> greedy_decode_batch(const TransformerParams& params,
                                              const std::vector<std::vector<TokenId>>& srcs,
                                              const DecodeConfig& cfg) {
  std::vector<DecodeResult> results(srcs.size());
  if (srcs.empty()) return results;
  NoGradScope no_grad;
  const PaddedIds src_ids = pad_sequences(srcs);
  const Tensor memory = encode(params, src_ids, false, nullptr);
  std::vector<std::size_t> caps(srcs.size());
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < srcs.size(); ++i) {
    caps[i] = max_output_length(source_length(srcs[i]), cfg);
    results[i].hit_cap = true;
    if (caps[i] > 0) active.push_back(i);
  }
  for (std::size_t step = 0; !active.empty(); ++step) {
    std::vector<std::vector<TokenId>> prefixes;
    prefixes.reserve(active.size());
    for (auto i : active) prefixes.push_back(results[i].tokens);
    const Tensor logits = decode(params, gather_rows(memory, active), gather_ids(src_ids, active),
                                 decoder_inputs(prefixes), false, nullptr);
    const auto lps = last_position_logprobs(logits);
    std::vector<std::size_t> still;
    for (std::size_t a = 0; a < active.size(); ++a) {
      auto& r = results[active[a]];
      const TokenId v = argmax_token(lps[a]);
      if (v < 0) continue;
      r.logprob += lps[a][static_cast<std::size_t>(v)];
      r.tokens.push_back(v);
      if (v == Vocab::kEos)
        r.hit_cap = false;
      else if (r.tokens.size() < caps[active[a]])
        still.push_back(active[a]);
    }
    active = std::move(still);
  }
  for (auto& r : results) finish(r, 0.0);
  return results;
}

DecodeResult beam_search(const TransformerParams& params, const std::vector<TokenId>& src,
                         const DecodeConfig& cfg) {
  return beam_search(model_scorer(params, src), max_output_length(source_length(src), cfg),
                     Vocab::kEos, cfg.beam_size, cfg.length_penalty);
}

Translator::Translator(TransformerParams params, MergeTable src_table, Vocab src_vocab,
                       Vocab tgt_vocab)
    : params_(std::move(params)),
      src_table_(std::move(src_table)),
      src_vocab_(std::move(src_vocab)),
      tgt_vocab_(std::move(tgt_vocab)) {
  if (src_vocab_.size() != params_.src_vocab_size() || tgt_vocab_.size() != params_.tgt_vocab_size())
    throw Error("translator: vocabulary sizes " + std::to_string(src_vocab_.size()) + "/" +
                std::to_string(tgt_vocab_.size()) + " do not match the model's " +
                std::to_string(params_.src_vocab_size()) + "/" +
                std::to_string(params_.tgt_vocab_size()));
}

Words Translator::ids_to_words(const std::vector<TokenId>& ids) const {
  return detokenize(tgt_vocab_.decode(strip_eos(ids)));
}

Words Translator::translate(const Words& sentence, const DecodeConfig& cfg) const {
  if (sentence.empty()) return {};
  const auto src = numericalize_source(sentence, src_vocab_, src_table_);
  const DecodeResult r =
      cfg.beam_size == 1 ? greedy_decode(params_, src, cfg) : beam_search(params_, src, cfg);
  return ids_to_words(r.tokens);
}

std::vector<Words> Translator::translate_all(const std::vector<Words>& sentences,
                                             const DecodeConfig& cfg) const {
  std::vector<Words> out(sentences.size());
  if (cfg.beam_size == 1) {
    constexpr std::size_t kChunk = 64;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < sentences.size(); ++i)
      if (!sentences[i].empty()) idx.push_back(i);
    for (std::size_t start = 0; start < idx.size(); start += kChunk) {
      const std::size_t end = std::min(idx.size(), start + kChunk);
      std::vector<std::vector<TokenId>> srcs;
      for (std::size_t j = start; j < end; ++j)
        srcs.push_back(numericalize_source(sentences[idx[j]], src_vocab_, src_table_));
      const auto results = greedy_decode_batch(params_, srcs, cfg);
      for (std::size_t j = start; j < end; ++j) out[idx[j]] = ids_to_words(results[j - start].tokens);
    }
    return out;
  }
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sentences.size()); ++i)
    out[static_cast<std::size_t>(i)] = translate(sentences[static_cast<std::size_t>(i)], cfg);
  return out;
}

}  // namespace ssnmt
