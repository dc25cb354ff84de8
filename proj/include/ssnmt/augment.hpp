#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssnmt/common.hpp"
#include "ssnmt/decode.hpp"
#include "ssnmt/io.hpp"

namespace ssnmt {

enum class AugmentStrategy { kRoundTrip, kWordDropout, kSynonym, kWordOrder };

std::string_view strategy_name(AugmentStrategy s);
// Accepts round_trip, word_dropout, synonym, word_order.
AugmentStrategy parse_strategy(std::string_view name);

struct AugmentConfig {
  AugmentStrategy strategy = AugmentStrategy::kWordDropout;
  double drop_p = 0.2;
  double sub_p = 0.2;
  std::optional<std::filesystem::path> lexicon_path;
  std::uint64_t seed = 1;
  DecodeConfig round_trip_decode = [] {
    DecodeConfig c;
    c.beam_size = 1;
    return c;
  }();

  void validate() const;
};

using Lexicon = std::map<std::string, std::vector<std::string>>;

// Each word dropped independently with probability drop_p. When every word
// would drop, one uniformly chosen word survives.
Words word_dropout(const Words& sentence, double drop_p, Rng& rng);

// Swaps one uniformly chosen adjacent pair. Sentences shorter than two words
// are returned unchanged.
Words word_order_swap(const Words& sentence, Rng& rng);

// "word<TAB>syn1,syn2,..." per line. Throws IoError when missing.
Lexicon load_lexicon(const std::filesystem::path& path);
Lexicon parse_lexicon(std::string_view text);

Words synonym_substitute(const Words& sentence, const Lexicon& lexicon, double sub_p, Rng& rng);

// Translates forward then back.
Words round_trip(const Words& sentence, const Translator& fwd, const Translator& rev,
                 const DecodeConfig& cfg);

class Augmenter {
 public:
  explicit Augmenter(AugmentConfig cfg);
  // Required by the round_trip strategy.
  Augmenter(AugmentConfig cfg, const Translator* fwd, const Translator* rev);

  // Sentence i draws from its own stream so results do not depend on
  // processing order.
  Words augment(const Words& sentence, std::size_t index) const;
  std::vector<Words> augment_all(const std::vector<Words>& sentences) const;

  const AugmentConfig& config() const { return cfg_; }

 private:
  AugmentConfig cfg_;
  Lexicon lexicon_;
  const Translator* fwd_ = nullptr;
  const Translator* rev_ = nullptr;
};

}  // namespace ssnmt
