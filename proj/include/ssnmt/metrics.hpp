#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "ssnmt/io.hpp"

namespace ssnmt {

struct BleuBreakdown {
  static constexpr std::size_t kMaxOrder = 4;
  std::array<double, kMaxOrder> precisions{};
  std::array<std::size_t, kMaxOrder> matches{};
  std::array<std::size_t, kMaxOrder> totals{};
  double brevity_penalty = 0.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
  bool smoothed = false;
  double score = 0.0;  // in [0, 100]

  std::string to_json() const;
};

// Corpus BLEU with one reference per hypothesis. Clipped n-gram counts are
// summed over the corpus before the precisions are formed. With `smooth`,
// orders n >= 2 get add-one on both matches and totals.
BleuBreakdown corpus_bleu(const std::vector<Words>& hyps, const std::vector<Words>& refs,
                          std::size_t max_n = 4, bool smooth = false);

}  // namespace ssnmt
