#include "ssnmt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "ssnmt/ops.hpp"

namespace ssnmt {
namespace {

class CoordinateProbe {
 public:
  CoordinateProbe(const std::function<Tensor()>& loss, Real& theta, std::uint64_t base_signature)
      : loss_(loss), theta_(theta), saved_(theta), base_(base_signature) {}
  ~CoordinateProbe() { theta_ = saved_; }

  // Central difference at step h, or nothing when a kink was crossed.
  std::optional<double> central(double h) {
    const auto up = at(saved_ + static_cast<Real>(h));
    const auto down = at(saved_ - static_cast<Real>(h));
    theta_ = saved_;
    if (!up || !down) return std::nullopt;
    return (*up - *down) / (2 * h);
  }

 private:
  std::optional<double> at(Real value) {
    theta_ = value;
    ops::KinkMonitor monitor;
    const double f = loss_().item();
    if (monitor.signature() != base_) return std::nullopt;
    return f;
  }

  const std::function<Tensor()>& loss_;
  Real& theta_;
  Real saved_;
  std::uint64_t base_;
};

std::optional<double> ridders(CoordinateProbe& probe, double h) {
  constexpr double kShrink = 1.4;
  constexpr double kShrink2 = kShrink * kShrink;
  constexpr int kSteps = 10;
  constexpr double kSafe = 2.0;
  std::vector<std::vector<double>> a(kSteps, std::vector<double>(kSteps));
  std::optional<double> best;
  double err = std::numeric_limits<double>::max();
  int start = -1;
  for (int i = 0; i < kSteps; ++i, h /= kShrink) {
    const auto d = probe.central(h);
    if (!d) {
      // Restart the tableau below the kink.
      start = -1;
      continue;
    }
    if (start < 0) start = i;
    a[0][i] = *d;
    if (i == start) {
      if (!best) best = *d;
      continue;
    }
    double fac = kShrink2;
    for (int j = 1; j <= i - start; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1);
      fac *= kShrink2;
      const double errt = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (errt <= err) {
        err = errt;
        best = a[j][i];
      }
    }
    const int top = i - start;
    if (std::abs(a[top][i] - a[top - 1][i - 1]) >= kSafe * err) break;
  }
  return best;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& loss, const ParamList& params, double eps,
                           FiniteDifference method) {
  Gradients grads;
  std::uint64_t base_signature = 0;
  {
    Tape tape;
    Tensor value;
    {
      TapeScope scope(tape);
      ops::KinkMonitor monitor;
      value = loss();
      base_signature = monitor.signature();
    }
    grads = tape.backward(value);
  }

  GradCheckResult result;
  NoGradScope no_grad;
  for (const auto& [name, tensor] : params) {
    Tensor handle = tensor;
    auto theta = handle.mutable_data();
    auto g = grads.of(tensor);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      CoordinateProbe probe(loss, theta[i], base_signature);
      const auto fd = method == FiniteDifference::kCentral ? probe.central(eps) : ridders(probe, eps);
      if (!fd) {
        ++result.kinks;
        continue;
      }
      const double ad = g.empty() ? 0.0 : static_cast<double>(g[i]);
      const double rel = std::abs(ad - *fd) / std::max(1e-8, std::abs(ad) + std::abs(*fd));
      ++result.coordinates;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace ssnmt
