#pragma once

// Byte-pair encoding with an end-of-word marker appended to the final
// character of every word ("low" -> l o w</w>), so detokenization is exact.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ssnmt/common.hpp"
#include "ssnmt/io.hpp"

namespace ssnmt {

inline constexpr std::string_view kEndOfWord = "</w>";

struct Merge {
  std::string left;
  std::string right;
  bool operator==(const Merge&) const = default;
};

class MergeTable {
 public:
  MergeTable() = default;
  // Throws Error on a duplicate pair.
  explicit MergeTable(std::vector<Merge> merges);

  const std::vector<Merge>& merges() const { return merges_; }
  std::size_t num_merges() const { return merges_.size(); }
  std::optional<std::size_t> rank(std::string_view left, std::string_view right) const;
  // The first k merges.
  MergeTable prefix(std::size_t k) const;

  // "#version 1" then one "left right" line per merge.
  std::string serialize() const;
  static MergeTable parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static MergeTable load(const std::filesystem::path& path);

  bool operator==(const MergeTable& other) const { return merges_ == other.merges_; }

 private:
  std::vector<Merge> merges_;
  std::unordered_map<std::string, std::size_t> ranks_;
};

MergeTable learn_bpe(const std::vector<std::string>& corpus, std::size_t num_merges);

std::vector<std::string> apply_bpe(const Words& sentence, const MergeTable& table);
Words detokenize(const std::vector<std::string>& subwords);

// UTF-8 code points of a word; invalid lead bytes become single-byte symbols.
std::vector<std::string> utf8_chars(std::string_view word);

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kNumReserved = 4;

  Vocab();

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  // Unknown tokens map to kUnk.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  TokenId add(const std::string& token);

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;

  // "token<TAB>id" per line, in id order.
  std::string serialize() const;
  static Vocab parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Reserved tokens first, then tokens with frequency >= min_freq ordered by
// (frequency desc, token asc).
Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_freq = 1);

}  // namespace ssnmt
