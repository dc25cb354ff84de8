#include "ssnmt/corpus.hpp"

#include <algorithm>
#include <numeric>

namespace ssnmt {

ParallelCorpus load_parallel(const std::filesystem::path& src_path,
                             const std::filesystem::path& tgt_path) {
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size())
    throw Error("line count mismatch " + std::to_string(src.size()) + " vs " +
                std::to_string(tgt.size()));
  ParallelCorpus corpus;
  for (std::size_t i = 0; i < src.size(); ++i) {
    SentencePair p{split_words(src[i]), split_words(tgt[i]), i};
    if (p.src.empty() || p.tgt.empty()) {
      ++corpus.dropped;
      continue;
    }
    corpus.pairs.push_back(std::move(p));
  }
  return corpus;
}

std::vector<TokenId> numericalize_source(const Words& sentence, const Vocab& vocab,
                                         const MergeTable& table) {
  auto ids = vocab.encode(apply_bpe(sentence, table));
  ids.push_back(Vocab::kEos);
  return ids;
}

Example numericalize(const SentencePair& pair, const Vocab& src_vocab, const Vocab& tgt_vocab,
                     const MergeTable& src_table, const MergeTable& tgt_table) {
  Example ex;
  ex.id = pair.id;
  ex.src = numericalize_source(pair.src, src_vocab, src_table);
  const auto y = tgt_vocab.encode(apply_bpe(pair.tgt, tgt_table));
  ex.tgt_in.reserve(y.size() + 1);
  ex.tgt_in.push_back(Vocab::kBos);
  ex.tgt_in.insert(ex.tgt_in.end(), y.begin(), y.end());
  ex.tgt_out = y;
  ex.tgt_out.push_back(Vocab::kEos);
  return ex;
}

std::size_t PaddedIds::non_pad() const {
  return static_cast<std::size_t>(
      std::count_if(ids.begin(), ids.end(), [](TokenId t) { return t != Vocab::kPad; }));
}

std::vector<TokenId> PaddedIds::row(std::size_t r) const {
  std::vector<TokenId> out(ids.begin() + static_cast<std::ptrdiff_t>(r * cols),
                           ids.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  while (!out.empty() && out.back() == Vocab::kPad) out.pop_back();
  return out;
}

PaddedIds pad_sequences(const std::vector<std::vector<TokenId>>& seqs) {
  PaddedIds p;
  p.rows = seqs.size();
  for (const auto& s : seqs) p.cols = std::max(p.cols, s.size());
  p.ids.assign(p.rows * p.cols, Vocab::kPad);
  for (std::size_t r = 0; r < seqs.size(); ++r)
    std::copy(seqs[r].begin(), seqs[r].end(), p.ids.begin() + static_cast<std::ptrdiff_t>(r * p.cols));
  return p;
}

Batch collate(const std::vector<Example>& examples, const std::vector<std::size_t>& indices) {
  std::vector<std::vector<TokenId>> src, aug, tin, tout;
  Batch b;
  bool any_aug = false;
  for (auto i : indices) {
    const auto& ex = examples.at(i);
    b.example_ids.push_back(ex.id);
    src.push_back(ex.src);
    aug.push_back(ex.aug_src);
    any_aug = any_aug || !ex.aug_src.empty();
    tin.push_back(ex.tgt_in);
    tout.push_back(ex.tgt_out);
  }
  b.src = pad_sequences(src);
  if (any_aug) b.aug_src = pad_sequences(aug);
  b.tgt_in = pad_sequences(tin);
  b.tgt_out = pad_sequences(tout);
  b.token_count = b.tgt_out.non_pad();
  return b;
}

std::vector<Batch> make_batches(const std::vector<Example>& examples, std::size_t max_tokens,
                                std::uint64_t seed) {
  if (max_tokens == 0) throw Error("make_batches: max_tokens must be >= 1");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (examples[a].tgt_out.size() != examples[b].tgt_out.size())
      return examples[a].tgt_out.size() < examples[b].tgt_out.size();
    return examples[a].id < examples[b].id;
  });

  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> current;
  std::size_t tokens = 0;
  for (auto i : order) {
    const std::size_t len = examples[i].tgt_out.size();
    if (!current.empty() && tokens + len > max_tokens) {
      groups.push_back(std::move(current));
      current.clear();
      tokens = 0;
    }
    current.push_back(i);
    tokens += len;
  }
  if (!current.empty()) groups.push_back(std::move(current));

  Rng rng(seed);
  std::shuffle(groups.begin(), groups.end(), rng);
  std::vector<Batch> batches;
  batches.reserve(groups.size());
  for (const auto& g : groups) batches.push_back(collate(examples, g));
  return batches;
}

}  // namespace ssnmt
