#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "helpers.hpp"
#include "ssnmt/objective.hpp"
#include "ssnmt/ops.hpp"

using namespace ssnmt;
using namespace testing;

TEST_CASE("token_kl hand value") {
  auto p = seq_of({{0.5, 0.5}});
  auto q = seq_of({{0.25, 0.75}});
  const double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  CHECK(token_kl(p, q) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(token_kl(p, q) - 0.1438) < 1e-4);
}

TEST_CASE("token_kl is non-negative and zero on equal inputs") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    auto p = seq_of({random_distribution(6, rng), random_distribution(6, rng)});
    auto q = seq_of({random_distribution(6, rng), random_distribution(6, rng)});
    CHECK(token_kl(p, q) >= 0);
    CHECK(token_kl(p, p) < 1e-12);
  }
}

TEST_CASE("token_kl averages over valid positions only") {
  auto p = seq_of({{0.5, 0.5}, {0.9, 0.1}});
  auto q = seq_of({{0.25, 0.75}, {0.1, 0.9}});
  p.valid[1] = q.valid[1] = 0;
  CHECK(token_kl(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(0.5 / 0.75)));
}

TEST_CASE("token_kl rejects mismatched shapes") {
  CHECK_THROWS_AS(token_kl(seq_of({{0.5, 0.5}}), seq_of({{0.2, 0.3, 0.5}})), ShapeError);
}

TEST_CASE("distribution check") {
  auto p = seq_of({{0.5, 0.5}});
  CHECK_NOTHROW(p.check());
  p.probs[0] = 0.6;
  CHECK_THROWS(p.check());
}

TEST_CASE("label smoothed cross entropy against direct evaluation") {
  Rng rng(2);
  Tensor logits = random_tensor({2, 3, 5}, rng, -2, 2, false);
  std::vector<TokenId> targets{1, 4, 0, 2, 0, 0};
  const double eps = 0.1;
  double total = 0;
  int n = 0;
  for (std::size_t r = 0; r < 6; ++r) {
    if (targets[r] == 0) continue;
    ++n;
    double z = 0;
    for (std::size_t v = 0; v < 5; ++v) z += std::exp(logits[r * 5 + v]);
    for (std::size_t v = 0; v < 5; ++v) {
      const double q = eps / 5 + (static_cast<TokenId>(v) == targets[r] ? 1 - eps : 0.0);
      total -= q * (logits[r * 5 + v] - std::log(z));
    }
  }
  CHECK(label_smoothed_ce(logits, targets, eps).item() == doctest::Approx(total / n).epsilon(1e-12));
}

TEST_CASE("label smoothing zero is negative log likelihood") {
  Tensor logits(Shape{1, 3}, std::vector<Real>{0.0, std::log(3.0), 0.0});
  std::vector<TokenId> t{1};
  CHECK(label_smoothed_ce(logits, t, 0.0).item() == doctest::Approx(-std::log(0.6)));
}

TEST_CASE("cross entropy over only padding throws") {
  Tensor logits(Shape{2, 3}, 0.0);
  std::vector<TokenId> t{0, 0};
  CHECK_THROWS_WITH(label_smoothed_ce(logits, t, 0.1), "no valid tokens");
}

TEST_CASE("consistency_kl equals token_kl of the student softmax") {
  Rng rng(3);
  Tensor teacher_logits = random_tensor({4, 6}, rng, -3, 3, false);
  Tensor student_logits = random_tensor({4, 6}, rng, -3, 3, false);
  Tensor tp = ops::softmax(teacher_logits);
  std::vector<std::uint8_t> valid{1, 1, 0, 1};
  const double got = consistency_kl(tp, student_logits, valid).item();
  TokenDistributionSeq p, q;
  p.length = q.length = 4;
  p.vocab = q.vocab = 6;
  p.probs.assign(tp.data().begin(), tp.data().end());
  auto sp = ops::softmax(student_logits);
  q.probs.assign(sp.data().begin(), sp.data().end());
  p.valid = q.valid = valid;
  CHECK(got == doctest::Approx(token_kl(p, q)).epsilon(1e-10));
}

TEST_CASE("consistency pass detaches the teacher") {
  Rng rng(4);
  auto p = init_params(tiny_config(), 9, 9, 4);
  auto tb = toy_batch(3, 9, rng);
  Batch batch{{0, 1, 2}, tb.src, tb.aug, tb.tgt_in, tb.tgt_out, tb.tgt_out.non_pad()};
  Tape tape;
  ConsistencyBranches br;
  {
    TapeScope scope(tape);
    br = consistency_pass(p, batch, DecoderInput::kForced, false, nullptr);
  }
  CHECK_FALSE(br.teacher_probs.requires_grad());
  CHECK(br.student_logits.requires_grad());
  CHECK(br.valid == non_pad(tb.tgt_out));
  Tensor clean = forward_teacher_forced(p, tb.src, tb.tgt_in, false, nullptr);
  Tensor expected = ops::softmax(ops::reshape(clean, Shape{clean.numel() / 9, 9}));
  for (std::size_t i = 0; i < expected.numel(); ++i) CHECK(br.teacher_probs[i] == expected[i]);
  br.teacher().check();
  br.student().check();
}

TEST_CASE("identical clean and augmented sources give zero consistency loss") {
  Rng rng(5);
  auto p = init_params(tiny_config(), 9, 9, 5);
  auto tb = toy_batch(2, 9, rng);
  Batch batch{{0, 1}, tb.src, tb.src, tb.tgt_in, tb.tgt_out, tb.tgt_out.non_pad()};
  auto br = consistency_pass(p, batch, DecoderInput::kForced, false, nullptr);
  CHECK(std::abs(consistency_kl(br.teacher_probs, br.student_logits, br.valid).item()) < 1e-12);
}

TEST_CASE("pseudo mode feeds the greedy translation of the clean source") {
  Rng rng(6);
  auto p = init_params(tiny_config(), 9, 9, 6);
  auto tb = toy_batch(2, 9, rng);
  Batch batch{{0, 1}, tb.src, tb.aug, tb.tgt_in, tb.tgt_out, tb.tgt_out.non_pad()};
  DecodeConfig greedy;
  greedy.beam_size = 1;
  greedy.max_len = 30;
  auto br = consistency_pass(p, batch, DecoderInput::kPseudo, false, nullptr, greedy);
  std::size_t expected_rows = 0, expected_len = 0;
  for (std::size_t r = 0; r < 2; ++r) {
    auto d = greedy_decode(p, tb.src.row(r), greedy);
    if (d.hit_cap) continue;
    ++expected_rows;
    expected_len = std::max(expected_len, d.tokens.size());
  }
  CHECK(br.skipped == 2 - expected_rows);
  CHECK(br.valid.size() == expected_rows * expected_len);
}

TEST_CASE("combined loss weights") {
  CHECK(combined_loss(2.0, 4.0, {0.5, 0.5}) == 3.0);
  CHECK(combined_loss(2.0, 4.0, {1.0, 0.0}) == 2.0);
  Tensor ce = Tensor::scalar(2.0), kl = Tensor::scalar(4.0);
  CHECK(combined_loss(ce, kl, {0.25, 0.75}).item() == doctest::Approx(3.5));
}
