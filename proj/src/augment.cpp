#include "ssnmt/augment.hpp"

#include <sstream>

namespace ssnmt {

std::string_view strategy_name(AugmentStrategy s) {
  switch (s) {
    case AugmentStrategy::kRoundTrip: return "round_trip";
    case AugmentStrategy::kWordDropout: return "word_dropout";
    case AugmentStrategy::kSynonym: return "synonym";
    case AugmentStrategy::kWordOrder: return "word_order";
  }
  return "unknown";
}

AugmentStrategy parse_strategy(std::string_view name) {
  for (auto s : {AugmentStrategy::kRoundTrip, AugmentStrategy::kWordDropout, AugmentStrategy::kSynonym,
                 AugmentStrategy::kWordOrder})
    if (strategy_name(s) == name) return s;
  throw ConfigError("strategy", "augment: unknown strategy '" + std::string(name) + "'");
}

void AugmentConfig::validate() const {
  if (!(drop_p >= 0 && drop_p < 1)) throw ConfigError("drop_p", "augment: drop_p must be in [0, 1)");
  if (!(sub_p >= 0 && sub_p <= 1)) throw ConfigError("sub_p", "augment: sub_p must be in [0, 1]");
  if (strategy == AugmentStrategy::kSynonym && !lexicon_path)
    throw ConfigError("lexicon", "augment: the synonym strategy requires a lexicon");
  if (strategy != AugmentStrategy::kSynonym && lexicon_path)
    throw ConfigError("lexicon", "augment: a lexicon is only used by the synonym strategy");
  round_trip_decode.validate();
}

Words word_dropout(const Words& sentence, double drop_p, Rng& rng) {
  if (sentence.empty()) return {};
  std::bernoulli_distribution drop(drop_p);
  Words out;
  for (const auto& w : sentence)
    if (!drop(rng)) out.push_back(w);
  if (out.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, sentence.size() - 1);
    out.push_back(sentence[pick(rng)]);
  }
  return out;
}

Words word_order_swap(const Words& sentence, Rng& rng) {
  Words out = sentence;
  if (out.size() < 2) return out;
  std::uniform_int_distribution<std::size_t> pick(0, out.size() - 2);
  const std::size_t i = pick(rng);
  std::swap(out[i], out[i + 1]);
  return out;
}

Lexicon parse_lexicon(std::string_view text) {
  Lexicon lex;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw Error("lexicon: line " + std::to_string(lineno) + " is not 'word<TAB>syn1,syn2'");
    std::vector<std::string> syns;
    std::istringstream list(line.substr(tab + 1));
    std::string syn;
    while (std::getline(list, syn, ','))
      if (!syn.empty()) syns.push_back(syn);
    if (syns.empty()) throw Error("lexicon: line " + std::to_string(lineno) + " lists no synonyms");
    auto& entry = lex[line.substr(0, tab)];
    entry.insert(entry.end(), syns.begin(), syns.end());
  }
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) { return parse_lexicon(read_file(path)); }

Words synonym_substitute(const Words& sentence, const Lexicon& lexicon, double sub_p, Rng& rng) {
  std::bernoulli_distribution substitute(sub_p);
  Words out;
  out.reserve(sentence.size());
  for (const auto& w : sentence) {
    auto it = lexicon.find(w);
    if (it == lexicon.end() || !substitute(rng)) {
      out.push_back(w);
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, it->second.size() - 1);
    out.push_back(it->second[pick(rng)]);
  }
  return out;
}

Words round_trip(const Words& sentence, const Translator& fwd, const Translator& rev,
                 const DecodeConfig& cfg) {
  if (sentence.empty()) return {};
  return rev.translate(fwd.translate(sentence, cfg), cfg);
}

Augmenter::Augmenter(AugmentConfig cfg) : Augmenter(std::move(cfg), nullptr, nullptr) {}

Augmenter::Augmenter(AugmentConfig cfg, const Translator* fwd, const Translator* rev)
    : cfg_(std::move(cfg)), fwd_(fwd), rev_(rev) {
  cfg_.validate();
  if (cfg_.strategy == AugmentStrategy::kSynonym) lexicon_ = load_lexicon(*cfg_.lexicon_path);
  if (cfg_.strategy == AugmentStrategy::kRoundTrip && (!fwd_ || !rev_))
    throw Error("augment: round_trip needs forward and reverse models");
}

Words Augmenter::augment(const Words& sentence, std::size_t index) const {
  Rng rng(derive_seed(cfg_.seed, "augment", index));
  switch (cfg_.strategy) {
    case AugmentStrategy::kWordDropout: return word_dropout(sentence, cfg_.drop_p, rng);
    case AugmentStrategy::kWordOrder: return word_order_swap(sentence, rng);
    case AugmentStrategy::kSynonym: return synonym_substitute(sentence, lexicon_, cfg_.sub_p, rng);
    case AugmentStrategy::kRoundTrip: return round_trip(sentence, *fwd_, *rev_, cfg_.round_trip_decode);
  }
  return sentence;
}

std::vector<Words> Augmenter::augment_all(const std::vector<Words>& sentences) const {
  if (cfg_.strategy == AugmentStrategy::kRoundTrip) {
    auto mid = fwd_->translate_all(sentences, cfg_.round_trip_decode);
    return rev_->translate_all(mid, cfg_.round_trip_decode);
  }
  std::vector<Words> out(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) out[i] = augment(sentences[i], i);
  return out;
}

}  // namespace ssnmt
