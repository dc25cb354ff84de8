#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ssnmt/common.hpp"
#include "ssnmt/io.hpp"
#include "ssnmt/subword.hpp"

namespace ssnmt {

struct SentencePair {
  Words src;
  Words tgt;
  std::size_t id = 0;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  std::size_t dropped = 0;  // lines empty on either side
};

// Line i of each file becomes pair id i. Throws Error "line count mismatch
// A vs B" when the files disagree, IoError when unreadable.
ParallelCorpus load_parallel(const std::filesystem::path& src_path,
                             const std::filesystem::path& tgt_path);

// A numericalized training example. aug_src is empty for labeled pairs and
// holds the augmented source u for consistency examples.
struct Example {
  std::size_t id = 0;
  std::vector<TokenId> src;      // x subwords + eos
  std::vector<TokenId> aug_src;  // u subwords + eos
  std::vector<TokenId> tgt_in;   // bos y1..yn
  std::vector<TokenId> tgt_out;  // y1..yn eos
};

// Subword ids of a sentence followed by eos; OOV subwords map to unk.
std::vector<TokenId> numericalize_source(const Words& sentence, const Vocab& vocab,
                                         const MergeTable& table);
Example numericalize(const SentencePair& pair, const Vocab& src_vocab, const Vocab& tgt_vocab,
                     const MergeTable& src_table, const MergeTable& tgt_table);
inline Example numericalize(const SentencePair& pair, const Vocab& src_vocab,
                            const Vocab& tgt_vocab, const MergeTable& table) {
  return numericalize(pair, src_vocab, tgt_vocab, table, table);
}

// Row-major id matrix, right-padded with Vocab::kPad.
struct PaddedIds {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<TokenId> ids;

  TokenId at(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
  bool is_pad(std::size_t r, std::size_t c) const { return at(r, c) == Vocab::kPad; }
  std::size_t non_pad() const;
  // Ids of row r without trailing padding.
  std::vector<TokenId> row(std::size_t r) const;
};

PaddedIds pad_sequences(const std::vector<std::vector<TokenId>>& seqs);

struct Batch {
  std::vector<std::size_t> example_ids;
  PaddedIds src;
  PaddedIds aug_src;  // rows == 0 for labeled batches
  PaddedIds tgt_in;
  PaddedIds tgt_out;
  std::size_t token_count = 0;  // non-pad target tokens

  bool has_augmented() const { return aug_src.rows > 0; }
};

Batch collate(const std::vector<Example>& examples, const std::vector<std::size_t>& indices);

// Sorts by target length (stable on id), packs greedily so each batch holds at
// most max_tokens target tokens (a single oversized example forms its own
// batch), then shuffles batch order with the seed.
std::vector<Batch> make_batches(const std::vector<Example>& examples, std::size_t max_tokens,
                                std::uint64_t seed);

}  // namespace ssnmt
