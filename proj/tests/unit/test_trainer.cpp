#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "ssnmt/io.hpp"
#include "ssnmt/ops.hpp"
#include "ssnmt/trainer.hpp"

using namespace ssnmt;
using namespace testing;

namespace {

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 2;
  c.avg_last_k = 2;
  c.max_tokens = 40;
  c.warmup_steps = 10;
  c.lr_peak = 1e-2;
  c.weights = {1.0, 0.0};
  return c;
}


}  // namespace

TEST_CASE("inverse square root schedule") {
  TrainConfig c;
  CHECK(inv_sqrt_lr(c.warmup_steps, c) == 0.0005);
  CHECK(inv_sqrt_lr(1, c) == doctest::Approx(1e-7 + (0.0005 - 1e-7) / 4000).epsilon(1e-12));
  CHECK(inv_sqrt_lr(4 * c.warmup_steps, c) == doctest::Approx(0.00025).epsilon(1e-12));
  CHECK(std::abs(inv_sqrt_lr(c.warmup_steps + 1, c) - inv_sqrt_lr(c.warmup_steps, c)) < 1e-7);
  CHECK_THROWS(inv_sqrt_lr(0, c));
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.avg_last_k = 31;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lr_peak = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("adam with zero gradient and no decay leaves parameters alone") {
  Tensor w(Shape{3}, std::vector<Real>{1, 2, 3});
  w.set_requires_grad(true);
  ParamList p{{"w", w}};
  Gradients none;
  AdamState s;
  TrainConfig c;
  c.weight_decay = 0;
  adam_step(p, none, s, 0.1, c);
  CHECK(w[0] == 1);
  CHECK(w[2] == 3);
}

TEST_CASE("adam first step moves by the learning rate") {
  Tensor w(Shape{1}, 0.5);
  w.set_requires_grad(true);
  ParamList p{{"w", w}};
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = ops::sum(w);
  }
  auto g = tape.backward(loss);
  AdamState s;
  TrainConfig c;
  c.weight_decay = 0;
  adam_step(p, g, s, 0.01, c);
  CHECK(w[0] == doctest::Approx(0.5 - 0.01).epsilon(1e-9));
}

TEST_CASE("adam rejects non-finite gradients without touching parameters") {
  Tensor w(Shape{2}, 1.0);
  w.set_requires_grad(true);
  ParamList p{{"w", w}};
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = ops::sum(ops::scale(w, std::numeric_limits<Real>::infinity()));
  }
  auto g = tape.backward(loss);
  AdamState s;
  CHECK_THROWS(adam_step(p, g, s, 0.1, TrainConfig{}));
  CHECK(w[0] == 1.0);
  CHECK(s.step == 0);
}

TEST_CASE("checkpoint averaging") {
  auto a = init_params(tiny_config(), 9, 9, 1);
  CHECK(same_params(average_checkpoints({a.clone(), a.clone(), a.clone()}, 3), a));
  auto b = init_params(tiny_config(), 9, 9, 2);
  CHECK(same_params(average_checkpoints({a.clone(), b.clone()}, 1), b));
  auto zero = a.clone(), two = a.clone();
  for (auto& e : zero.entries()) for (auto& v : e.tensor.mutable_data()) v = 0;
  for (auto& e : two.entries()) for (auto& v : e.tensor.mutable_data()) v = 2;
  auto mean = average_checkpoints({zero, two}, 2);
  for (const auto& e : mean.entries()) for (Real v : e.tensor.data()) CHECK(v == 1.0);
  CHECK_THROWS(average_checkpoints({a}, 2));
  auto other_cfg = tiny_config();
  other_cfg.d_ffn = 32;
  CHECK_THROWS(average_checkpoints({a, init_params(other_cfg, 9, 9, 1)}, 2));
}

TEST_CASE("training is reproducible and logs one row per epoch") {
  auto data = copy_task(40, 5, 10, 3);
  const auto cfg = quick_config();
  auto r1 = train(tiny_config(), cfg, data);
  auto r2 = train(tiny_config(), cfg, data);
  CHECK(r1.log.size() == cfg.epochs);
  CHECK(metrics_csv(r1.log) == metrics_csv(r2.log));
  CHECK(same_params(r1.final_params, r2.final_params));
  CHECK(metrics_csv(r1.log).rfind("epoch,step,lr,ce,kl,total,valid_bleu\n", 0) == 0);
}

TEST_CASE("lambda2 = 0 reduces to the supervised trainer bit for bit") {
  auto data = copy_task(40, 5, 10, 4);
  auto model = tiny_config();
  model.dropout = 0.1;
  const auto cfg = quick_config();
  auto a = train(model, cfg, data);
  auto b = train_supervised(model, cfg, data);
  CHECK(metrics_csv(a.log) == metrics_csv(b.log));
  CHECK(same_params(a.final_params, b.final_params));
  CHECK(same_params(a.averaged, b.averaged));
}

TEST_CASE("consistency training requires augmented data and uses it") {
  auto data = copy_task(30, 4, 10, 5);
  auto cfg = quick_config();
  cfg.weights = {0.5, 0.5};
  CHECK_THROWS(train(tiny_config(), cfg, data));
  for (const auto& e : data.labeled) {
    Example a = e;
    a.aug_src = e.src;
    if (a.aug_src.size() > 2) a.aug_src.erase(a.aug_src.begin());
    data.augmented.push_back(a);
  }
  auto r = train(tiny_config(), cfg, data);
  for (const auto& m : r.log) {
    CHECK(m.kl > 0);
    CHECK(m.total == doctest::Approx(0.5 * m.ce + 0.5 * m.kl).epsilon(1e-9));
  }
}

TEST_CASE("empty labeled corpus is an error") {
  TrainData empty;
  empty.src_vocab = empty.tgt_vocab = 9;
  CHECK_THROWS(train(tiny_config(), quick_config(), empty));
}

TEST_CASE("run directory layout") {
  auto dir = std::filesystem::temp_directory_path() / "ssnmt_train_test";
  std::filesystem::remove_all(dir);
  auto data = copy_task(20, 3, 10, 6);
  train(tiny_config(), quick_config(), data, RunDir{dir});
  CHECK(std::filesystem::exists(dir / "ckpt-epoch-1.bin"));
  CHECK(std::filesystem::exists(dir / "ckpt-epoch-2.bin"));
  CHECK(std::filesystem::exists(dir / "ckpt-avg.bin"));
  CHECK(read_lines(dir / "metrics.csv").size() == 3);
}
