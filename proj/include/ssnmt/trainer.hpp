#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ssnmt/checkpoint.hpp"
#include "ssnmt/corpus.hpp"
#include "ssnmt/decode.hpp"
#include "ssnmt/model.hpp"
#include "ssnmt/objective.hpp"
#include "ssnmt/tensor.hpp"

namespace ssnmt {

struct TrainConfig {
  double lr_peak = 5e-4;
  double lr_init = 1e-7;
  std::size_t warmup_steps = 4000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  std::size_t epochs = 30;
  std::size_t max_tokens = 3000;
  std::size_t avg_last_k = 10;
  double label_smoothing = 0.1;
  LossWeights weights;
  // Augmented batches drawn per labeled batch: ceil(mu).
  double mu = 1.0;
  std::uint64_t seed = 1;
  bool consistency = true;
  DecoderInput decoder_input = DecoderInput::kForced;

  void validate() const;
};

// Linear warmup from lr_init to lr_peak, then lr_peak * sqrt(warmup / step).
double inv_sqrt_lr(std::size_t step, const TrainConfig& cfg);

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;
};

// Decoupled weight decay (theta -= lr * wd * theta) followed by a
// bias-corrected Adam update. Throws Error naming the tensor when a gradient
// is not finite; no parameter is modified in that case.
void adam_step(ParamList& params, const Gradients& grads, AdamState& state, double lr,
               const TrainConfig& cfg);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0;
  double ce = 0;
  double kl = 0;
  double total = 0;
  double valid_bleu = 0;
};

inline constexpr const char* kMetricsHeader = "epoch,step,lr,ce,kl,total,valid_bleu";
std::string metrics_csv(const std::vector<EpochMetrics>& log);

struct TrainData {
  std::vector<Example> labeled;
  std::vector<Example> augmented;  // aug_src set on every example
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::vector<std::vector<TokenId>> valid_src;
  std::vector<Words> valid_refs;
  // Maps decoded target ids (eos stripped) back to words for BLEU.
  std::function<Words(const std::vector<TokenId>&)> to_words;
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  std::vector<Checkpoint> last_checkpoints;  // the last avg_last_k epochs
  TransformerParams final_params;
  TransformerParams averaged;
  std::size_t pseudo_skipped = 0;
};

struct RunDir {
  std::filesystem::path path;  // ckpt-epoch-<n>.bin, ckpt-avg.bin, metrics.csv
};

// Consistency-regularized training: every step draws one labeled batch for
// the cross-entropy term and ceil(mu) augmented batches for the KL term.
// With lambda2 == 0 or consistency off, no augmented batch is touched and
// the run equals train_supervised. Throws when the KL term is active but the
// augmented set is empty.
TrainResult train(const TransformerConfig& model_cfg, const TrainConfig& cfg, const TrainData& data,
                  const std::optional<RunDir>& run_dir = std::nullopt);

// Plain cross-entropy trainer, kept as the reference for the supervised reduction.
TrainResult train_supervised(const TransformerConfig& model_cfg, const TrainConfig& cfg,
                             const TrainData& data,
                             const std::optional<RunDir>& run_dir = std::nullopt);

// Elementwise mean of the last k snapshots. Throws on k == 0, too few
// snapshots, or mismatched configs.
TransformerParams average_checkpoints(const std::vector<TransformerParams>& snapshots, std::size_t k);

// Smoothed corpus BLEU of greedy translations of the validation set.
double validation_bleu(const TransformerParams& params, const TrainData& data);

}  // namespace ssnmt
