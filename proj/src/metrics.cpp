#include "ssnmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"

#include "ssnmt/common.hpp"

namespace ssnmt {
namespace {

using NgramCounts = std::map<Words, std::size_t>;

NgramCounts count_ngrams(const Words& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Words(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

}  // namespace

std::string BleuBreakdown::to_json() const {
  nlohmann::ordered_json j;
  j["bleu"] = score;
  j["precisions"] = precisions;
  j["matches"] = matches;
  j["totals"] = totals;
  j["brevity_penalty"] = brevity_penalty;
  j["hyp_len"] = hyp_len;
  j["ref_len"] = ref_len;
  j["smoothed"] = smoothed;
  return j.dump();
}

BleuBreakdown corpus_bleu(const std::vector<Words>& hyps, const std::vector<Words>& refs,
                          std::size_t max_n, bool smooth) {
  if (hyps.size() != refs.size())
    throw Error("corpus_bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                std::to_string(refs.size()) + " references");
  if (max_n == 0 || max_n > BleuBreakdown::kMaxOrder)
    throw Error("corpus_bleu: max_n must be in [1, 4]");
  BleuBreakdown b;
  b.smoothed = smooth;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    b.hyp_len += hyps[s].size();
    b.ref_len += refs[s].size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto hc = count_ngrams(hyps[s], n);
      const auto rc = count_ngrams(refs[s], n);
      for (const auto& [gram, c] : hc) {
        b.totals[n - 1] += c;
        auto it = rc.find(gram);
        if (it != rc.end()) b.matches[n - 1] += std::min(c, it->second);
      }
    }
  }

  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    double m = static_cast<double>(b.matches[n - 1]);
    double t = static_cast<double>(b.totals[n - 1]);
    if (smooth && n >= 2) {
      m += 1.0;
      t += 1.0;
    }
    const double p = t > 0 ? m / t : 0.0;
    b.precisions[n - 1] = p;
    if (p <= 0.0)
      zero = true;
    else
      log_sum += std::log(p) / static_cast<double>(max_n);
  }

  if (b.hyp_len == 0)
    b.brevity_penalty = 0.0;
  else if (b.hyp_len >= b.ref_len)
    b.brevity_penalty = 1.0;
  else
    b.brevity_penalty = std::exp(1.0 - static_cast<double>(b.ref_len) / static_cast<double>(b.hyp_len));

  b.score = zero ? 0.0 : 100.0 * b.brevity_penalty * std::exp(log_sum);
  return b;
}

}  // namespace ssnmt
