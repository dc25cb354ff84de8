#pragma once

// Glue between text corpora and the trainer: subword learning, vocabularies,
// numericalization, and the synthetic copy-translation task.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ssnmt/corpus.hpp"
#include "ssnmt/decode.hpp"
#include "ssnmt/filter.hpp"
#include "ssnmt/subword.hpp"
#include "ssnmt/trainer.hpp"

namespace ssnmt {

struct PreparedData {
  MergeTable table;  // learned jointly on both sides of the training pairs
  Vocab src_vocab;
  Vocab tgt_vocab;
  TrainData data;
};

PreparedData prepare_data(const std::vector<SentencePair>& train, const AugmentedCorpus& augmented,
                          const std::vector<SentencePair>& valid, std::size_t bpe_merges);

// Same table and vocabularies, new corpora.
TrainData numericalize_data(const MergeTable& table, const Vocab& src_vocab, const Vocab& tgt_vocab,
                            const std::vector<SentencePair>& train, const AugmentedCorpus& augmented,
                            const std::vector<SentencePair>& valid);

// Augmented example ids follow the labeled ones.
std::vector<Example> numericalize_augmented(const AugmentedCorpus& augmented, const MergeTable& table,
                                            const Vocab& src_vocab, const Vocab& tgt_vocab,
                                            std::size_t first_id = 0);

Translator make_translator(const PreparedData& prepared, TransformerParams params);

// Corpus BLEU (unsmoothed) of translations of test sources against references.
double test_bleu(const Translator& translator, const std::vector<SentencePair>& test,
                 const DecodeConfig& cfg);

struct ToyTaskConfig {
  std::size_t train_size = 2000;
  std::size_t valid_size = 100;
  std::size_t test_size = 200;
  std::size_t lexicon_size = 24;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  // Untranslated class particles; 0 disables them.
  std::size_t particles = 0;
  double test_drop_p = 0.2;
  std::uint64_t seed = 1;
};

// Source words are drawn uniformly from a fixed invented lexicon; the target
// is the word-by-word translation through a fixed dictionary. With particles,
// every source word is preceded by the particle of its class (word index mod
// particles), which has no counterpart in the target. noisy_test
// holds the test pairs with word dropout applied to the source only.
struct ToyTask {
  std::vector<SentencePair> train;
  std::vector<SentencePair> valid;
  std::vector<SentencePair> test;
  std::vector<SentencePair> noisy_test;
};

ToyTask make_toy_task(const ToyTaskConfig& cfg);

// One-hot vector per distinct source word of the task.
WordVectorEmbedding toy_word_vectors(const ToyTask& task);

struct SweepRow {
  double lambda1 = 0;
  double lambda2 = 0;
  double valid_bleu = 0;
  double test_bleu = 0;
};

inline constexpr const char* kSweepHeader = "lambda1,lambda2,valid_bleu,test_bleu";

// Trains with lambda1 = 0.1, ..., 0.9 and lambda2 = 1 - lambda1, all with
// the seed in cfg, and scores the averaged model of each run.
std::vector<SweepRow> sweep_lambda(const TransformerConfig& model_cfg, const TrainConfig& cfg,
                                   const PreparedData& prepared, const std::vector<SentencePair>& test,
                                   const DecodeConfig& decode_cfg);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace ssnmt
