#include "ssnmt/filter.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace ssnmt {

void FilterConfig::validate() const {
  if (!(alpha1 > 0)) throw ConfigError("alpha1", "filter: alpha1 must be positive");
  if (!(alpha1 <= alpha2)) throw ConfigError("alpha2", "filter: alpha2 must be >= alpha1");
  if (!(sim_threshold >= -1 && sim_threshold <= 1))
    throw ConfigError("sim_threshold", "filter: sim_threshold must be in [-1, 1]");
  if (!(mu > 0)) throw ConfigError("mu", "filter: mu must be positive");
}

WordVectorEmbedding::WordVectorEmbedding(std::size_t dim,
                                         std::unordered_map<std::string, std::vector<double>> table)
    : dim_(dim), table_(std::move(table)) {
  if (dim_ == 0) throw Error("word vectors: dimension must be >= 1");
  for (const auto& [word, vec] : table_)
    if (vec.size() != dim_)
      throw ShapeError("word vectors: '" + word + "' has " + std::to_string(vec.size()) +
                       " components, expected " + std::to_string(dim_));
}

WordVectorEmbedding WordVectorEmbedding::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw Error("word vectors: empty file");
  const auto header = split_words(line);
  if (header.size() != 2 || header[0] != "d") throw Error("word vectors: first line must be 'd <dim>'");
  const std::size_t dim = std::stoul(header[1]);
  std::unordered_map<std::string, std::vector<double>> table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto parts = split_words(line);
    if (parts.empty()) continue;
    if (parts.size() != dim + 1)
      throw ShapeError("word vectors: line " + std::to_string(lineno) + " has " +
                       std::to_string(parts.size() - 1) + " components, expected " + std::to_string(dim));
    std::vector<double> vec;
    vec.reserve(dim);
    for (std::size_t i = 1; i < parts.size(); ++i) vec.push_back(std::stod(parts[i]));
    if (!table.emplace(parts[0], std::move(vec)).second)
      throw Error("word vectors: duplicate word '" + parts[0] + "'");
  }
  return WordVectorEmbedding(dim, std::move(table));
}

WordVectorEmbedding WordVectorEmbedding::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

std::vector<double> WordVectorEmbedding::embed(const Words& sentence) const {
  std::vector<double> out(dim_, 0.0);
  if (sentence.empty()) return out;
  for (const auto& w : sentence) {
    auto it = table_.find(w);
    if (it == table_.end()) continue;
    for (std::size_t i = 0; i < dim_; ++i) out[i] += it->second[i];
  }
  for (auto& v : out) v /= static_cast<double>(sentence.size());
  return out;
}

double length_ratio(const Words& x, const Words& u) {
  if (u.empty()) throw Error("empty augmented");
  return static_cast<double>(x.size()) / static_cast<double>(u.size());
}

bool length_ratio_keep(const Words& x, const Words& u, const FilterConfig& cfg) {
  if (u.empty()) return false;
  const double r = length_ratio(x, u);
  return cfg.alpha1 <= r && r <= cfg.alpha2;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ShapeError("cosine: dimension " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double similarity(const Words& x, const Words& u, const EmbeddingProvider& provider) {
  return cosine(provider.embed(x), provider.embed(u));
}

bool semantic_keep(const Words& x, const Words& u, const EmbeddingProvider& provider,
                   const FilterConfig& cfg) {
  return similarity(x, u, provider) >= cfg.sim_threshold;
}

AugmentedCorpus dedup(const AugmentedCorpus& examples, const std::vector<Words>& original_sources) {
  std::set<Words> originals(original_sources.begin(), original_sources.end());
  std::set<std::pair<Words, Words>> seen;
  AugmentedCorpus out;
  for (const auto& ex : examples) {
    if (originals.count(ex.u)) continue;
    if (!seen.emplace(ex.x, ex.u).second) continue;
    out.push_back(ex);
  }
  return out;
}

std::size_t FilterReport::total_rejected() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.rejected;
  return n;
}

std::string FilterReport::to_jsonl() const {
  std::string out;
  for (const auto& s : stages) {
    nlohmann::ordered_json j;
    j["stage"] = s.stage;
    j["kept"] = s.kept;
    j["rejected"] = s.rejected;
    out += j.dump() + "\n";
  }
  return out;
}

FilterResult filter_examples(const AugmentedCorpus& examples, const std::vector<Words>& original_sources,
                             const FilterConfig& cfg, const EmbeddingProvider& provider) {
  cfg.validate();
  FilterResult result;
  result.report.inputs = examples.size();

  std::set<Words> originals(original_sources.begin(), original_sources.end());
  std::set<std::pair<Words, Words>> seen;
  AugmentedCorpus stage;
  StageCount counts{"dedup"};
  for (const auto& ex : examples) {
    std::string reason;
    if (originals.count(ex.u))
      reason = "augmented equals a clean source";
    else if (!seen.emplace(ex.x, ex.u).second)
      reason = "duplicate pair";
    if (reason.empty()) {
      stage.push_back(ex);
      ++counts.kept;
    } else {
      result.report.rejections.push_back({ex.id, counts.stage, reason});
      ++counts.rejected;
    }
  }
  result.report.stages.push_back(counts);

  AugmentedCorpus next;
  counts = {"length_ratio"};
  for (auto& ex : stage) {
    if (ex.u.empty()) {
      result.report.rejections.push_back({ex.id, counts.stage, "empty augmented"});
      ++counts.rejected;
      continue;
    }
    ex.ratio = length_ratio(ex.x, ex.u);
    if (length_ratio_keep(ex.x, ex.u, cfg)) {
      next.push_back(std::move(ex));
      ++counts.kept;
    } else {
      result.report.rejections.push_back({ex.id, counts.stage, "ratio outside window"});
      ++counts.rejected;
    }
  }
  result.report.stages.push_back(counts);

  counts = {"semantic"};
  for (auto& ex : next) {
    ex.sim = similarity(ex.x, ex.u, provider);
    if (ex.sim >= cfg.sim_threshold) {
      result.kept.push_back(std::move(ex));
      ++counts.kept;
    } else {
      result.report.rejections.push_back({ex.id, counts.stage, "low similarity"});
      ++counts.rejected;
    }
  }
  result.report.stages.push_back(counts);
  return result;
}

FilterResult run_pipeline(const std::vector<SentencePair>& pairs, const Augmenter& augmenter,
                          const FilterConfig& cfg, const EmbeddingProvider& provider) {
  std::vector<Words> sources;
  sources.reserve(pairs.size());
  for (const auto& p : pairs) sources.push_back(p.src);
  const auto augmented = augmenter.augment_all(sources);
  AugmentedCorpus examples;
  examples.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    examples.push_back({pairs[i].src, augmented[i], pairs[i].tgt, 0.0, 0.0, pairs[i].id});
  return filter_examples(examples, sources, cfg, provider);
}

std::string augmented_tsv(const AugmentedCorpus& corpus) {
  std::string out;
  for (const auto& ex : corpus)
    out += join_words(ex.x) + "\t" + join_words(ex.u) + "\t" + join_words(ex.y) + "\n";
  return out;
}

AugmentedCorpus parse_augmented_tsv(std::string_view text) {
  AugmentedCorpus out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream row(line);
    std::string field;
    while (std::getline(row, field, '\t')) fields.push_back(field);
    if (fields.size() != 3)
      throw Error("augmented corpus: line " + std::to_string(lineno) + " does not have 3 tab-separated fields");
    AugmentedExample ex{split_words(fields[0]), split_words(fields[1]), split_words(fields[2])};
    ex.id = out.size();
    if (!ex.u.empty()) ex.ratio = length_ratio(ex.x, ex.u);
    out.push_back(std::move(ex));
  }
  return out;
}

AugmentedCorpus load_augmented_tsv(const std::filesystem::path& path) {
  return parse_augmented_tsv(read_file(path));
}

}  // namespace ssnmt
