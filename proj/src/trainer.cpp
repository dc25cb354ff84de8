#include "ssnmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <fmt/format.h>

#include "ssnmt/io.hpp"
#include "ssnmt/metrics.hpp"
#include "ssnmt/ops.hpp"

namespace ssnmt {
namespace {

// Per-epoch bookkeeping shared by both trainers: validation, checkpoints,
// the metrics log and the final average.
class EpochRecorder {
 public:
  EpochRecorder(const TrainConfig& cfg, const TrainData& data, const std::optional<RunDir>& run_dir)
      : cfg_(cfg), data_(data), run_dir_(run_dir) {
    if (run_dir_) std::filesystem::create_directories(run_dir_->path);
  }

  void end_epoch(const TransformerParams& params, EpochMetrics m) {
    m.valid_bleu = validation_bleu(params, data_);
    log_.push_back(m);
    Checkpoint ckpt{params.clone(), m.epoch, m.valid_bleu};
    if (run_dir_) {
      save_checkpoint(run_dir_->path / fmt::format("ckpt-epoch-{}.bin", m.epoch), ckpt);
      write_file(run_dir_->path / "metrics.csv", metrics_csv(log_));
    }
    recent_.push_back(std::move(ckpt));
    while (recent_.size() > cfg_.avg_last_k) recent_.pop_front();
  }

  TrainResult finish(TransformerParams final_params, std::size_t pseudo_skipped) {
    std::vector<TransformerParams> snaps;
    for (const auto& c : recent_) snaps.push_back(c.params.clone());
    TransformerParams avg = average_checkpoints(snaps, std::min(cfg_.avg_last_k, snaps.size()));
    if (run_dir_) {
      Checkpoint c{avg.clone(), log_.empty() ? 0 : log_.back().epoch, validation_bleu(avg, data_)};
      save_checkpoint(run_dir_->path / "ckpt-avg.bin", c);
    }
    TrainResult r{std::move(log_), {recent_.begin(), recent_.end()}, std::move(final_params),
                  std::move(avg), pseudo_skipped};
    return r;
  }

 private:
  const TrainConfig& cfg_;
  const TrainData& data_;
  const std::optional<RunDir>& run_dir_;
  std::vector<EpochMetrics> log_;
  std::deque<Checkpoint> recent_;
};

void check_inputs(const TransformerConfig& model_cfg, const TrainConfig& cfg, const TrainData& data) {
  model_cfg.validate();
  cfg.validate();
  if (data.labeled.empty()) throw Error("train: empty labeled corpus");
  if (data.src_vocab == 0 || data.tgt_vocab == 0) throw Error("train: vocabulary sizes not set");
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* key) {
    if (!(v > 0)) throw ConfigError(key, std::string("train: ") + key + " must be positive");
  };
  positive(lr_peak, "lr_peak");
  positive(lr_init, "lr_init");
  positive(adam_eps, "adam_eps");
  positive(mu, "mu");
  if (warmup_steps == 0) throw ConfigError("warmup_steps", "train: warmup_steps must be >= 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) throw ConfigError("adam_beta1", "train: adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) throw ConfigError("adam_beta2", "train: adam_beta2 must be in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay", "train: weight_decay must be >= 0");
  if (epochs == 0) throw ConfigError("epochs", "train: epochs must be >= 1");
  if (max_tokens == 0) throw ConfigError("max_tokens", "train: max_tokens must be >= 1");
  if (avg_last_k == 0 || avg_last_k > epochs)
    throw ConfigError("avg_last_k", "train: avg_last_k must be in [1, epochs]");
  if (!(label_smoothing >= 0 && label_smoothing < 1))
    throw ConfigError("label_smoothing", "train: label_smoothing must be in [0, 1)");
  if (!(weights.lambda1 >= 0)) throw ConfigError("lambda1", "train: lambda1 must be >= 0");
  if (!(weights.lambda2 >= 0)) throw ConfigError("lambda2", "train: lambda2 must be >= 0");
}

double inv_sqrt_lr(std::size_t step, const TrainConfig& cfg) {
  if (step == 0) throw Error("inv_sqrt_lr: step must be >= 1");
  const auto warmup = static_cast<double>(cfg.warmup_steps);
  const auto s = static_cast<double>(step);
  if (step <= cfg.warmup_steps) {
    if (step == cfg.warmup_steps) return cfg.lr_peak;
    return cfg.lr_init + (cfg.lr_peak - cfg.lr_init) * s / warmup;
  }
  return cfg.lr_peak * std::sqrt(warmup / s);
}

void adam_step(ParamList& params, const Gradients& grads, AdamState& state, double lr,
               const TrainConfig& cfg) {
  for (const auto& [name, t] : params)
    for (Real g : grads.of(t))
      if (!std::isfinite(g)) throw Error("adam_step: non-finite gradient in '" + name + "'");

  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].tensor.numel(), Real{0});
      state.v[i].assign(params[i].tensor.numel(), Real{0});
    }
  }
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double decay = lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].tensor.mutable_data();
    auto g = grads.of(params[i].tensor);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g.empty() ? 0.0 : static_cast<double>(g[j]);
      double th = static_cast<double>(theta[j]);
      th -= decay * th;
      m[j] = static_cast<Real>(b1 * m[j] + (1.0 - b1) * gj);
      v[j] = static_cast<Real>(b2 * v[j] + (1.0 - b2) * gj * gj);
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      th -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
      theta[j] = static_cast<Real>(th);
    }
  }
}

std::string metrics_csv(const std::vector<EpochMetrics>& log) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& m : log)
    out += fmt::format("{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", m.epoch, m.step, m.lr, m.ce,
                       m.kl, m.total, m.valid_bleu);
  return out;
}

double validation_bleu(const TransformerParams& params, const TrainData& data) {
  if (data.valid_src.empty()) return 0.0;
  if (!data.to_words) throw Error("validation: no id-to-word mapping");
  DecodeConfig greedy;
  greedy.beam_size = 1;
  constexpr std::size_t kChunk = 64;
  std::vector<Words> hyps;
  hyps.reserve(data.valid_src.size());
  for (std::size_t start = 0; start < data.valid_src.size(); start += kChunk) {
    const std::size_t end = std::min(data.valid_src.size(), start + kChunk);
    std::vector<std::vector<TokenId>> chunk(data.valid_src.begin() + static_cast<std::ptrdiff_t>(start),
                                            data.valid_src.begin() + static_cast<std::ptrdiff_t>(end));
    for (const auto& r : greedy_decode_batch(params, chunk, greedy))
      hyps.push_back(data.to_words(strip_eos(r.tokens)));
  }
  return corpus_bleu(hyps, data.valid_refs, 4, true).score;
}

TransformerParams average_checkpoints(const std::vector<TransformerParams>& snapshots, std::size_t k) {
  if (k == 0) throw Error("average_checkpoints: k must be >= 1");
  if (snapshots.size() < k)
    throw Error("average_checkpoints: need " + std::to_string(k) + " snapshots, have " +
                std::to_string(snapshots.size()));
  const std::size_t first = snapshots.size() - k;
  TransformerParams avg = snapshots[first].clone();
  for (std::size_t s = first + 1; s < snapshots.size(); ++s)
    if (!snapshots[s].compatible_with(avg))
      throw Error("average_checkpoints: snapshot " + std::to_string(s) + " has a different configuration");
  for (std::size_t i = 0; i < avg.entries().size(); ++i) {
    auto out = avg.entries()[i].tensor.mutable_data();
    for (std::size_t j = 0; j < out.size(); ++j) {
      // Offsets from the first snapshot keep identical inputs exact.
      const double base = static_cast<double>(out[j]);
      double offset = 0;
      for (std::size_t s = first + 1; s < snapshots.size(); ++s)
        offset += static_cast<double>(snapshots[s].entries()[i].tensor.data()[j]) - base;
      out[j] = static_cast<Real>(base + offset / static_cast<double>(k));
    }
  }
  return avg;
}

TrainResult train(const TransformerConfig& model_cfg, const TrainConfig& cfg, const TrainData& data,
                  const std::optional<RunDir>& run_dir) {
  check_inputs(model_cfg, cfg, data);
  const bool use_kl = cfg.consistency && cfg.weights.lambda2 > 0;
  if (use_kl && data.augmented.empty())
    throw Error("train: lambda2 > 0 requires a non-empty augmented corpus");

  TransformerParams params =
      init_params(model_cfg, data.src_vocab, data.tgt_vocab, derive_seed(cfg.seed, "init"));
  AdamState adam;
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  Rng student_rng(derive_seed(cfg.seed, "dropout-consistency"));
  EpochRecorder recorder(cfg, data, run_dir);
  const auto draws = static_cast<std::size_t>(std::ceil(cfg.mu));
  DecodeConfig pseudo_decode;
  pseudo_decode.beam_size = 1;

  std::size_t step = 0;
  std::size_t skipped = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(data.labeled, cfg.max_tokens, derive_seed(cfg.seed, "batches", epoch));
    std::vector<Batch> aug_batches;
    if (use_kl)
      aug_batches = make_batches(data.augmented, cfg.max_tokens, derive_seed(cfg.seed, "aug-batches", epoch));
    std::size_t aug_cursor = 0;
    double ce_sum = 0, kl_sum = 0, total_sum = 0, lr = 0;

    for (const auto& batch : batches) {
      ++step;
      lr = inv_sqrt_lr(step, cfg);
      Tape tape;
      Tensor loss;
      double kl_value = 0;
      {
        TapeScope scope(tape);
        Tensor logits = forward_teacher_forced(params, batch.src, batch.tgt_in, true, &dropout_rng);
        Tensor ce = label_smoothed_ce(logits, batch.tgt_out.ids, static_cast<Real>(cfg.label_smoothing));
        ce_sum += ce.item();
        std::vector<Tensor> kls;
        if (use_kl) {
          for (std::size_t d = 0; d < draws; ++d) {
            const Batch& ab = aug_batches[aug_cursor++ % aug_batches.size()];
            auto branches = consistency_pass(params, ab, cfg.decoder_input, true, &student_rng, pseudo_decode);
            skipped += branches.skipped;
            if (branches.empty()) continue;
            kls.push_back(consistency_kl(branches.teacher_probs, branches.student_logits, branches.valid));
          }
        }
        if (kls.empty()) {
          loss = ops::scale(ce, static_cast<Real>(cfg.weights.lambda1));
        } else {
          Tensor kl = kls.size() == 1 ? kls.front()
                                      : ops::scale(ops::sum(ops::concat(kls)),
                                                   Real{1} / static_cast<Real>(kls.size()));
          kl_value = kl.item();
          loss = combined_loss(ce, kl, cfg.weights);
        }
      }
      kl_sum += kl_value;
      total_sum += loss.item();
      const Gradients grads = tape.backward(loss);
      adam_step(params.entries(), grads, adam, lr, cfg);
    }

    const auto n = static_cast<double>(batches.size());
    recorder.end_epoch(params, {epoch, step, lr, ce_sum / n, kl_sum / n, total_sum / n, 0.0});
  }
  return recorder.finish(std::move(params), skipped);
}

TrainResult train_supervised(const TransformerConfig& model_cfg, const TrainConfig& cfg,
                             const TrainData& data, const std::optional<RunDir>& run_dir) {
  check_inputs(model_cfg, cfg, data);
  TransformerParams params =
      init_params(model_cfg, data.src_vocab, data.tgt_vocab, derive_seed(cfg.seed, "init"));
  AdamState adam;
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  EpochRecorder recorder(cfg, data, run_dir);

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(data.labeled, cfg.max_tokens, derive_seed(cfg.seed, "batches", epoch));
    double ce_sum = 0, lr = 0;
    for (const auto& batch : batches) {
      ++step;
      lr = inv_sqrt_lr(step, cfg);
      Tape tape;
      Tensor ce;
      {
        TapeScope scope(tape);
        Tensor logits = forward_teacher_forced(params, batch.src, batch.tgt_in, true, &dropout_rng);
        ce = label_smoothed_ce(logits, batch.tgt_out.ids, static_cast<Real>(cfg.label_smoothing));
      }
      ce_sum += ce.item();
      adam_step(params.entries(), tape.backward(ce), adam, lr, cfg);
    }
    const double mean_ce = ce_sum / static_cast<double>(batches.size());
    recorder.end_epoch(params, {epoch, step, lr, mean_ce, 0.0, mean_ce, 0.0});
  }
  return recorder.finish(std::move(params), 0);
}

}  // namespace ssnmt
