#pragma once

// Binary checkpoint layout, all integers and floats little-endian:
//
//   magic        8 bytes  "SSNMTCKP"
//   version      u32      1
//   num_blocks, num_heads, d_model, d_ffn, max_positions   u64 each
//   dropout      f64
//   tied         u8
//   src_vocab, tgt_vocab                                    u64 each
//   epoch        u64
//   metric       f64      validation BLEU at save time
//   count        u64      number of tensors
//   count x { name_len u32, name bytes, rank u32, dims u64[rank], data f64[numel] }

#include <cstddef>
#include <filesystem>
#include <string>

#include "ssnmt/model.hpp"

namespace ssnmt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TransformerParams params;
  std::size_t epoch = 0;
  double valid_bleu = 0.0;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ssnmt
