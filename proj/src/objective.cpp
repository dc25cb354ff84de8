#include "ssnmt/objective.hpp"

#include <cmath>

#include "ssnmt/ops.hpp"

namespace ssnmt {
namespace {

TokenDistributionSeq to_seq(const Tensor& probs, const std::vector<std::uint8_t>& valid) {
  TokenDistributionSeq s;
  s.vocab = probs.shape().back();
  s.length = probs.numel() / s.vocab;
  s.probs.assign(probs.data().begin(), probs.data().end());
  s.valid = valid;
  return s;
}

std::vector<std::uint8_t> non_pad_flags(const PaddedIds& ids) {
  std::vector<std::uint8_t> flags(ids.ids.size());
  for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = ids.ids[i] != Vocab::kPad ? 1 : 0;
  return flags;
}

}  // namespace

void TokenDistributionSeq::check() const {
  if (probs.size() != length * vocab || valid.size() != length)
    throw ShapeError("token distribution: inconsistent sizes");
  for (std::size_t t = 0; t < length; ++t) {
    if (!valid[t]) continue;
    double total = 0;
    for (Real p : row(t)) {
      if (p < 0) throw Error("token distribution: negative probability at position " + std::to_string(t));
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw Error("token distribution: row " + std::to_string(t) + " sums to " + std::to_string(total));
  }
}

Tensor label_smoothed_ce(const Tensor& logits, std::span<const TokenId> targets, Real epsilon,
                         TokenId pad) {
  if (!(epsilon >= 0 && epsilon < 1)) throw Error("label_smoothed_ce: epsilon must be in [0, 1)");
  const std::size_t vocab = logits.shape().back();
  const std::size_t rows = logits.numel() / vocab;
  if (targets.size() != rows)
    throw ShapeError("label_smoothed_ce: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(logits.shape()));
  std::vector<Real> q(rows * vocab, 0);
  std::size_t valid = 0;
  const Real smooth = epsilon / static_cast<Real>(vocab);
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] == pad) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab)
      throw ShapeError("label_smoothed_ce: target id " + std::to_string(targets[r]) + " out of range");
    ++valid;
    for (std::size_t v = 0; v < vocab; ++v) q[r * vocab + v] = smooth;
    q[r * vocab + static_cast<std::size_t>(targets[r])] += Real{1} - epsilon;
  }
  if (valid == 0) throw Error("no valid tokens");
  Tensor lp = ops::log_softmax(ops::reshape(logits, Shape{rows, vocab}));
  Tensor cross = ops::sum(ops::mul(lp, Tensor(Shape{rows, vocab}, std::move(q))));
  return ops::scale(cross, Real{-1} / static_cast<Real>(valid));
}

double token_kl(const TokenDistributionSeq& teacher, const TokenDistributionSeq& student) {
  if (teacher.length != student.length || teacher.vocab != student.vocab ||
      teacher.probs.size() != student.probs.size() || teacher.valid != student.valid)
    throw ShapeError("token_kl: teacher [" + std::to_string(teacher.length) + "," +
                     std::to_string(teacher.vocab) + "] vs student [" +
                     std::to_string(student.length) + "," + std::to_string(student.vocab) + "]");
  double total = 0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < teacher.length; ++t) {
    if (!teacher.valid[t]) continue;
    ++n;
    auto p = teacher.row(t);
    auto q = student.row(t);
    double kl = 0;
    for (std::size_t v = 0; v < teacher.vocab; ++v) {
      if (p[v] <= 0) continue;
      kl += p[v] * (std::log(static_cast<double>(p[v])) -
                    std::log(std::max(static_cast<double>(q[v]), kKlProbFloor)));
    }
    total += kl;
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

Tensor consistency_kl(const Tensor& teacher_probs, const Tensor& student_logits,
                      std::span<const std::uint8_t> valid) {
  const std::size_t vocab = teacher_probs.shape().back();
  const std::size_t rows = teacher_probs.numel() / vocab;
  if (student_logits.numel() != teacher_probs.numel() || valid.size() != rows)
    throw ShapeError("consistency_kl: teacher " + shape_str(teacher_probs.shape()) + " vs student " +
                     shape_str(student_logits.shape()));
  std::vector<Real> p(teacher_probs.data().begin(), teacher_probs.data().end());
  double entropy_term = 0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!valid[r]) {
      std::fill_n(p.begin() + static_cast<std::ptrdiff_t>(r * vocab), vocab, Real{0});
      continue;
    }
    ++n;
    for (std::size_t v = 0; v < vocab; ++v) {
      const Real pv = p[r * vocab + v];
      if (pv > 0) entropy_term += pv * std::log(static_cast<double>(pv));
    }
  }
  if (n == 0) throw Error("no valid tokens");
  Tensor lq = ops::clamp_min(ops::log_softmax(ops::reshape(student_logits, Shape{rows, vocab})),
                             static_cast<Real>(std::log(kKlProbFloor)));
  Tensor cross = ops::sum(ops::mul(lq, Tensor(Shape{rows, vocab}, std::move(p))));
  const Real inv_n = Real{1} / static_cast<Real>(n);
  return ops::add(ops::scale(cross, -inv_n), Tensor::scalar(static_cast<Real>(entropy_term) * inv_n));
}

TokenDistributionSeq ConsistencyBranches::teacher() const { return to_seq(teacher_probs, valid); }

TokenDistributionSeq ConsistencyBranches::student() const {
  NoGradScope no_grad;
  const std::size_t vocab = student_logits.shape().back();
  return to_seq(ops::softmax(ops::reshape(student_logits, Shape{student_logits.numel() / vocab, vocab})),
                valid);
}

ConsistencyBranches consistency_pass(const TransformerParams& params, const Batch& batch,
                                     DecoderInput mode, bool train, Rng* rng,
                                     const DecodeConfig& pseudo_decode) {
  if (!batch.has_augmented()) throw Error("consistency_pass: batch carries no augmented sources");
  ConsistencyBranches out;
  PaddedIds clean = batch.src;
  PaddedIds augmented = batch.aug_src;
  PaddedIds tgt_in = batch.tgt_in;
  PaddedIds tgt_out = batch.tgt_out;

  if (mode == DecoderInput::kPseudo) {
    std::vector<std::vector<TokenId>> srcs;
    for (std::size_t r = 0; r < clean.rows; ++r) srcs.push_back(clean.row(r));
    const auto decoded = greedy_decode_batch(params, srcs, pseudo_decode);
    std::vector<std::vector<TokenId>> xs, us, ins, outs;
    for (std::size_t r = 0; r < clean.rows; ++r) {
      if (decoded[r].hit_cap) {
        ++out.skipped;
        continue;
      }
      const auto y = strip_eos(decoded[r].tokens);
      xs.push_back(srcs[r]);
      us.push_back(augmented.row(r));
      std::vector<TokenId> in{Vocab::kBos};
      in.insert(in.end(), y.begin(), y.end());
      ins.push_back(std::move(in));
      std::vector<TokenId> o = y;
      o.push_back(Vocab::kEos);
      outs.push_back(std::move(o));
    }
    if (xs.empty()) return out;
    clean = pad_sequences(xs);
    augmented = pad_sequences(us);
    tgt_in = pad_sequences(ins);
    tgt_out = pad_sequences(outs);
  }

  out.valid = non_pad_flags(tgt_out);
  {
    NoGradScope no_grad;
    Tensor logits = forward_teacher_forced(params, clean, tgt_in, false, nullptr);
    const std::size_t vocab = logits.shape().back();
    out.teacher_probs = ops::softmax(ops::reshape(logits, Shape{logits.numel() / vocab, vocab}));
  }
  out.student_logits = forward_teacher_forced(params, augmented, tgt_in, train, rng);
  return out;
}

Tensor combined_loss(const Tensor& ce, const Tensor& kl, const LossWeights& w) {
  return ops::add(ops::scale(ce, static_cast<Real>(w.lambda1)), ops::scale(kl, static_cast<Real>(w.lambda2)));
}

double combined_loss(double ce, double kl, const LossWeights& w) {
  return w.lambda1 * ce + w.lambda2 * kl;
}

}  // namespace ssnmt
