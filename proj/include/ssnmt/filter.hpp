#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ssnmt/augment.hpp"
#include "ssnmt/corpus.hpp"
#include "ssnmt/io.hpp"

namespace ssnmt {

struct AugmentedExample {
  Words x;
  Words u;
  Words y;
  double ratio = 0;  // len(x) / len(u) in words
  double sim = 0;
  std::size_t id = 0;
};

using AugmentedCorpus = std::vector<AugmentedExample>;

struct FilterConfig {
  double alpha1 = 0.7;
  double alpha2 = 1.4;
  double sim_threshold = 0.5;
  double mu = 1.0;

  void validate() const;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed(const Words& sentence) const = 0;
};

// Sentence embedding is the mean of its word vectors, with out-of-vocabulary
// words contributing the zero vector. The empty sentence embeds to zero.
class WordVectorEmbedding : public EmbeddingProvider {
 public:
  WordVectorEmbedding(std::size_t dim, std::unordered_map<std::string, std::vector<double>> table);

  // First line "d <dim>", then "word v1 ... vd" per line.
  static WordVectorEmbedding parse(std::string_view text);
  static WordVectorEmbedding load(const std::filesystem::path& path);

  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(const Words& sentence) const override;
  bool contains(const std::string& word) const { return table_.count(word) != 0; }

 private:
  std::size_t dim_;
  std::unordered_map<std::string, std::vector<double>> table_;
};

double length_ratio(const Words& x, const Words& u);
// Inclusive window. An empty u is rejected.
bool length_ratio_keep(const Words& x, const Words& u, const FilterConfig& cfg);
// Zero when either norm is zero. Throws ShapeError on a dimension mismatch.
double cosine(const std::vector<double>& a, const std::vector<double>& b);
double similarity(const Words& x, const Words& u, const EmbeddingProvider& provider);
bool semantic_keep(const Words& x, const Words& u, const EmbeddingProvider& provider,
                   const FilterConfig& cfg);

// Keeps the first occurrence of each (x, u) and drops examples whose u equals
// any sentence in original_sources.
AugmentedCorpus dedup(const AugmentedCorpus& examples, const std::vector<Words>& original_sources);

struct StageCount {
  std::string stage;
  std::size_t kept = 0;
  std::size_t rejected = 0;
};

struct Rejection {
  std::size_t id = 0;
  std::string stage;
  std::string reason;
};

struct FilterReport {
  std::size_t inputs = 0;
  std::vector<StageCount> stages;  // dedup, length_ratio, semantic
  std::vector<Rejection> rejections;

  std::size_t kept() const { return stages.empty() ? inputs : stages.back().kept; }
  std::size_t total_rejected() const;
  // One JSON object per stage: {"stage", "kept", "rejected"}.
  std::string to_jsonl() const;
};

struct FilterResult {
  AugmentedCorpus kept;
  FilterReport report;
};

// dedup, then the length-ratio window, then the similarity threshold. Output
// keeps input order; ratio and sim are filled in on kept examples.
FilterResult filter_examples(const AugmentedCorpus& examples, const std::vector<Words>& original_sources,
                             const FilterConfig& cfg, const EmbeddingProvider& provider);

// Augments each pair's source, then filters against the clean sources.
FilterResult run_pipeline(const std::vector<SentencePair>& pairs, const Augmenter& augmenter,
                          const FilterConfig& cfg, const EmbeddingProvider& provider);

// "x<TAB>u<TAB>y" per line.
std::string augmented_tsv(const AugmentedCorpus& corpus);
AugmentedCorpus parse_augmented_tsv(std::string_view text);
AugmentedCorpus load_augmented_tsv(const std::filesystem::path& path);

}  // namespace ssnmt
