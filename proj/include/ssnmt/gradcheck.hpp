#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ssnmt/model.hpp"
#include "ssnmt/tensor.hpp"

namespace ssnmt {

enum class FiniteDifference {
  kCentral,     // (f(θ+eps) - f(θ-eps)) / 2eps
  kRichardson,  // Ridders' extrapolation of central differences, starting at step eps
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;  // compared
  std::size_t kinks = 0;        // excluded: every usable step straddled a relu/clamp kink
};

// Compares reverse-mode gradients of a scalar loss against finite
// differences, coordinate by coordinate. The relative error of one
// coordinate is |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|). Perturbations
// that flip any relu or clamp_min input across its kink are not used; a
// coordinate with no usable step is counted in `kinks`. loss must be
// deterministic and read the parameters through their shared storage.
GradCheckResult grad_check(const std::function<Tensor()>& loss, const ParamList& params,
                           double eps = 1e-5, FiniteDifference method = FiniteDifference::kCentral);

}  // namespace ssnmt
