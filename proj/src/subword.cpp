#include "ssnmt/subword.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace ssnmt {
namespace {

std::string pair_key(std::string_view left, std::string_view right) {
  std::string key;
  key.reserve(left.size() + right.size() + 1);
  key += left;
  key += ' ';
  key += right;
  return key;
}

bool ends_with_marker(std::string_view token) {
  return token.size() >= kEndOfWord.size() &&
         token.substr(token.size() - kEndOfWord.size()) == kEndOfWord;
}

std::vector<std::string> initial_symbols(std::string_view word) {
  auto chars = utf8_chars(word);
  if (!chars.empty()) chars.back() += kEndOfWord;
  return chars;
}

using Pair = std::pair<std::string, std::string>;

// Greedy BPE learner over a word-frequency table. Pair counts are kept in
// `counts` and mirrored in `ranked` (ordered by count desc, then pair asc)
// so the next merge is always ranked.begin().
class BpeLearner {
 public:
  explicit BpeLearner(const std::map<std::string, std::int64_t>& word_freq) {
    for (const auto& [word, freq] : word_freq) {
      words_.push_back(initial_symbols(word));
      freqs_.push_back(freq);
    }
    for (std::size_t w = 0; w < words_.size(); ++w) add_word_pairs(w, +1);
  }

  std::optional<Pair> best() const {
    if (ranked_.empty()) return std::nullopt;
    return ranked_.begin()->second;
  }

  void merge(const Pair& pair) {
    auto it = where_.find(pair);
    if (it == where_.end()) return;
    const std::set<std::size_t> affected = it->second;
    const std::string merged = pair.first + pair.second;
    for (std::size_t w : affected) {
      auto& sym = words_[w];
      bool present = false;
      for (std::size_t i = 0; i + 1 < sym.size() && !present; ++i)
        present = sym[i] == pair.first && sym[i + 1] == pair.second;
      if (!present) continue;
      add_word_pairs(w, -1);
      std::vector<std::string> next;
      next.reserve(sym.size());
      for (std::size_t i = 0; i < sym.size();) {
        if (i + 1 < sym.size() && sym[i] == pair.first && sym[i + 1] == pair.second) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(sym[i]);
          ++i;
        }
      }
      sym = std::move(next);
      add_word_pairs(w, +1);
    }
  }

 private:
  void adjust(const Pair& pair, std::int64_t delta) {
    auto& count = counts_[pair];
    if (count > 0) ranked_.erase({-count, pair});
    count += delta;
    if (count > 0)
      ranked_.insert({-count, pair});
    else
      counts_.erase(pair);
  }

  void add_word_pairs(std::size_t w, int sign) {
    const auto& sym = words_[w];
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      Pair p{sym[i], sym[i + 1]};
      adjust(p, sign * freqs_[w]);
      if (sign > 0) where_[p].insert(w);
    }
  }

  std::vector<std::vector<std::string>> words_;
  std::vector<std::int64_t> freqs_;
  std::map<Pair, std::int64_t> counts_;
  std::set<std::pair<std::int64_t, Pair>> ranked_;
  // May hold stale word indices; merge() re-checks each word.
  std::map<Pair, std::set<std::size_t>> where_;
};

}  // namespace

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    std::size_t len = 1;
    if ((lead & 0xE0) == 0xC0)
      len = 2;
    else if ((lead & 0xF0) == 0xE0)
      len = 3;
    else if ((lead & 0xF8) == 0xF0)
      len = 4;
    len = std::min(len, word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

MergeTable::MergeTable(std::vector<Merge> merges) : merges_(std::move(merges)) {
  ranks_.reserve(merges_.size());
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    auto [it, inserted] = ranks_.emplace(pair_key(merges_[r].left, merges_[r].right), r);
    if (!inserted)
      throw Error("merge table: duplicate pair '" + merges_[r].left + " " + merges_[r].right + "'");
  }
}

std::optional<std::size_t> MergeTable::rank(std::string_view left, std::string_view right) const {
  auto it = ranks_.find(pair_key(left, right));
  if (it == ranks_.end()) return std::nullopt;
  return it->second;
}

MergeTable MergeTable::prefix(std::size_t k) const {
  k = std::min(k, merges_.size());
  return MergeTable(std::vector<Merge>(merges_.begin(), merges_.begin() + static_cast<std::ptrdiff_t>(k)));
}

std::string MergeTable::serialize() const {
  std::string out = "#version 1\n";
  for (const auto& m : merges_) out += m.left + " " + m.right + "\n";
  return out;
}

MergeTable MergeTable::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "#version 1")
    throw Error("merge table: missing '#version 1' header");
  std::vector<Merge> merges;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto parts = split_words(line);
    if (parts.size() != 2)
      throw Error("merge table: line " + std::to_string(lineno) + " is not 'left right'");
    merges.push_back({parts[0], parts[1]});
  }
  return MergeTable(std::move(merges));
}

void MergeTable::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

MergeTable MergeTable::load(const std::filesystem::path& path) { return parse(read_file(path)); }

MergeTable learn_bpe(const std::vector<std::string>& corpus, std::size_t num_merges) {
  if (corpus.empty()) throw Error("empty corpus");
  std::map<std::string, std::int64_t> word_freq;
  for (const auto& line : corpus)
    for (auto& w : split_words(line)) ++word_freq[w];
  BpeLearner learner(word_freq);
  std::vector<Merge> merges;
  merges.reserve(num_merges);
  while (merges.size() < num_merges) {
    auto best = learner.best();
    if (!best) break;
    merges.push_back({best->first, best->second});
    learner.merge(*best);
  }
  return MergeTable(std::move(merges));
}

std::vector<std::string> apply_bpe(const Words& sentence, const MergeTable& table) {
  std::vector<std::string> out;
  for (const auto& word : sentence) {
    auto sym = initial_symbols(word);
    while (sym.size() > 1) {
      std::size_t best_rank = std::numeric_limits<std::size_t>::max();
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
        auto r = table.rank(sym[i], sym[i + 1]);
        if (r && *r < best_rank) best_rank = *r;
      }
      if (best_rank == std::numeric_limits<std::size_t>::max()) break;
      const auto& m = table.merges()[best_rank];
      std::vector<std::string> next;
      next.reserve(sym.size());
      for (std::size_t i = 0; i < sym.size();) {
        if (i + 1 < sym.size() && sym[i] == m.left && sym[i + 1] == m.right) {
          next.push_back(m.left + m.right);
          i += 2;
        } else {
          next.push_back(std::move(sym[i]));
          ++i;
        }
      }
      sym = std::move(next);
    }
    for (auto& s : sym) out.push_back(std::move(s));
  }
  return out;
}

Words detokenize(const std::vector<std::string>& subwords) {
  Words out;
  std::string current;
  for (const auto& sw : subwords) {
    if (ends_with_marker(sw)) {
      current.append(sw, 0, sw.size() - kEndOfWord.size());
      out.push_back(std::move(current));
      current.clear();
    } else {
      current += sw;
    }
  }
  // A truncated final word (no marker) is still emitted.
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<s>", "</s>", "<unk>"}) add(t);
}

bool Vocab::contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

TokenId Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw Error("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocab::add(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::vector<TokenId> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocab::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (auto i : ids) tokens.push_back(token(i));
  return tokens;
}

std::string Vocab::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) out += tokens_[i] + "\t" + std::to_string(i) + "\n";
  return out;
}

Vocab Vocab::parse(std::string_view text) {
  Vocab v;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw Error("vocab: line without tab: '" + line + "'");
    const std::string token = line.substr(0, tab);
    const auto id = std::stoul(line.substr(tab + 1));
    if (id != expected) throw Error("vocab: ids must be dense and ordered, got " + std::to_string(id));
    if (id < kNumReserved) {
      if (v.tokens_[id] != token) throw Error("vocab: reserved id " + std::to_string(id) + " is '" + token + "'");
    } else if (v.add(token) != static_cast<TokenId>(id)) {
      throw Error("vocab: duplicate token '" + token + "'");
    }
    ++expected;
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Vocab Vocab::load(const std::filesystem::path& path) { return parse(read_file(path)); }

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_freq) {
  std::map<std::string, std::size_t> freq;
  for (const auto& sentence : corpus)
    for (const auto& tok : sentence) ++freq[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, n] : ranked)
    if (n >= min_freq) v.add(tok);
  return v;
}

}  // namespace ssnmt
