#include "ssnmt/pipeline.hpp"

#include <set>

#include <fmt/format.h>

#include "ssnmt/augment.hpp"
#include "ssnmt/metrics.hpp"

namespace ssnmt {

std::vector<Example> numericalize_augmented(const AugmentedCorpus& augmented, const MergeTable& table,
                                            const Vocab& src_vocab, const Vocab& tgt_vocab,
                                            std::size_t first_id) {
  std::vector<Example> out;
  out.reserve(augmented.size());
  for (std::size_t i = 0; i < augmented.size(); ++i) {
    const auto& a = augmented[i];
    Example e = numericalize({a.x, a.y, first_id + i}, src_vocab, tgt_vocab, table);
    e.aug_src = numericalize_source(a.u, src_vocab, table);
    out.push_back(std::move(e));
  }
  return out;
}

TrainData numericalize_data(const MergeTable& table, const Vocab& src_vocab, const Vocab& tgt_vocab,
                            const std::vector<SentencePair>& train, const AugmentedCorpus& augmented,
                            const std::vector<SentencePair>& valid) {
  TrainData d;
  d.src_vocab = src_vocab.size();
  d.tgt_vocab = tgt_vocab.size();
  for (std::size_t i = 0; i < train.size(); ++i) {
    SentencePair p = train[i];
    p.id = i;
    d.labeled.push_back(numericalize(p, src_vocab, tgt_vocab, table));
  }
  d.augmented = numericalize_augmented(augmented, table, src_vocab, tgt_vocab, train.size());
  for (const auto& p : valid) {
    d.valid_src.push_back(numericalize_source(p.src, src_vocab, table));
    d.valid_refs.push_back(p.tgt);
  }
  d.to_words = [tgt_vocab](const std::vector<TokenId>& ids) { return detokenize(tgt_vocab.decode(ids)); };
  return d;
}

PreparedData prepare_data(const std::vector<SentencePair>& train, const AugmentedCorpus& augmented,
                          const std::vector<SentencePair>& valid, std::size_t bpe_merges) {
  if (train.empty()) throw Error("prepare_data: empty training corpus");
  std::vector<std::string> lines;
  lines.reserve(2 * train.size());
  for (const auto& p : train) {
    lines.push_back(join_words(p.src));
    lines.push_back(join_words(p.tgt));
  }
  PreparedData out;
  out.table = learn_bpe(lines, bpe_merges);
  std::vector<std::vector<std::string>> src_side, tgt_side;
  for (const auto& p : train) {
    src_side.push_back(apply_bpe(p.src, out.table));
    tgt_side.push_back(apply_bpe(p.tgt, out.table));
  }
  for (const auto& a : augmented) src_side.push_back(apply_bpe(a.u, out.table));
  out.src_vocab = build_vocab(src_side);
  out.tgt_vocab = build_vocab(tgt_side);
  out.data = numericalize_data(out.table, out.src_vocab, out.tgt_vocab, train, augmented, valid);
  return out;
}

Translator make_translator(const PreparedData& prepared, TransformerParams params) {
  return Translator(std::move(params), prepared.table, prepared.src_vocab, prepared.tgt_vocab);
}

double test_bleu(const Translator& translator, const std::vector<SentencePair>& test,
                 const DecodeConfig& cfg) {
  std::vector<Words> srcs, refs;
  for (const auto& p : test) {
    srcs.push_back(p.src);
    refs.push_back(p.tgt);
  }
  return corpus_bleu(translator.translate_all(srcs, cfg), refs).score;
}

namespace {

// Distinct two-syllable words; the two sides draw from disjoint consonants.
Words invent_words(std::size_t count, std::string_view consonants, Rng& rng) {
  static constexpr std::string_view kVowels = "aeiou";
  std::uniform_int_distribution<std::size_t> c(0, consonants.size() - 1), v(0, kVowels.size() - 1);
  std::set<std::string> seen;
  Words out;
  if (count > consonants.size() * consonants.size() * 25) throw ConfigError("lexicon_size", "toy lexicon too large");
  while (out.size() < count) {
    std::string w{consonants[c(rng)], kVowels[v(rng)], consonants[c(rng)], kVowels[v(rng)]};
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

}  // namespace

ToyTask make_toy_task(const ToyTaskConfig& cfg) {
  if (cfg.lexicon_size < 2) throw ConfigError("lexicon_size", "toy lexicon needs at least 2 words");
  if (cfg.min_len == 0 || cfg.min_len > cfg.max_len) throw ConfigError("min_len", "toy lengths must satisfy 1 <= min_len <= max_len");
  Rng lex_rng(derive_seed(cfg.seed, "toy-lexicon"));
  const Words src_words = invent_words(cfg.lexicon_size, "bdgklmnprst", lex_rng);
  const Words tgt_words = invent_words(cfg.lexicon_size, "fhjqvwxyz", lex_rng);
  Words particles;
  for (std::size_t i = 0; i < cfg.particles; ++i) particles.push_back("c" + std::to_string(i));

  Rng rng(derive_seed(cfg.seed, "toy-sentences"));
  std::uniform_int_distribution<std::size_t> len(cfg.min_len, cfg.max_len), word(0, cfg.lexicon_size - 1);
  auto sample = [&](std::size_t id) {
    SentencePair p;
    p.id = id;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t w = word(rng);
      if (!particles.empty()) p.src.push_back(particles[w % particles.size()]);
      p.src.push_back(src_words[w]);
      p.tgt.push_back(tgt_words[w]);
    }
    return p;
  };
  ToyTask t;
  for (std::size_t i = 0; i < cfg.train_size; ++i) t.train.push_back(sample(i));
  for (std::size_t i = 0; i < cfg.valid_size; ++i) t.valid.push_back(sample(i));
  for (std::size_t i = 0; i < cfg.test_size; ++i) t.test.push_back(sample(i));
  for (const auto& p : t.test) {
    Rng noise(derive_seed(cfg.seed, "toy-noise", p.id));
    t.noisy_test.push_back({word_dropout(p.src, cfg.test_drop_p, noise), p.tgt, p.id});
  }
  return t;
}

WordVectorEmbedding toy_word_vectors(const ToyTask& task) {
  std::set<std::string> words;
  for (const auto* part : {&task.train, &task.valid, &task.test})
    for (const auto& p : *part) words.insert(p.src.begin(), p.src.end());
  std::unordered_map<std::string, std::vector<double>> table;
  std::size_t i = 0;
  for (const auto& w : words) {
    std::vector<double> v(words.size(), 0.0);
    v[i++] = 1.0;
    table.emplace(w, std::move(v));
  }
  return WordVectorEmbedding(words.size(), std::move(table));
}

std::vector<SweepRow> sweep_lambda(const TransformerConfig& model_cfg, const TrainConfig& cfg,
                                   const PreparedData& prepared, const std::vector<SentencePair>& test,
                                   const DecodeConfig& decode_cfg) {
  std::vector<SweepRow> rows;
  for (int k = 1; k <= 9; ++k) {
    TrainConfig run = cfg;
    run.weights = {k / 10.0, (10 - k) / 10.0};
    TrainResult r = train(model_cfg, run, prepared.data);
    const double valid = validation_bleu(r.averaged, prepared.data);
    const Translator tr = make_translator(prepared, std::move(r.averaged));
    rows.push_back({run.weights.lambda1, run.weights.lambda2, valid, test_bleu(tr, test, decode_cfg)});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{:.6f},{:.6f}\n", r.lambda1, r.lambda2, r.valid_bleu, r.test_bleu);
  return out;
}

}  // namespace ssnmt
