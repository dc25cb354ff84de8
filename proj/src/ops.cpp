#include "ssnmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <utility>

#include "ssnmt/kernels.hpp"

namespace ssnmt::ops {
namespace {

thread_local KinkMonitor* active_monitor = nullptr;

using kernels::Trans;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename Fn>
void record(Tensor& out, Fn&& fn) {
  out.set_requires_grad(true);
  Tape::active()->record(out, std::forward<Fn>(fn));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
}

}  // namespace

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2 || x.rank() < 1 || x.shape().back() != w.dim(0)) shape_error("matmul", x, w);
  const std::size_t k = w.dim(0);
  const std::size_t n = w.dim(1);
  const std::size_t m = x.numel() / k;
  Shape shape = x.shape();
  shape.back() = n;
  Tensor out(std::move(shape));
  kernels::gemm(Trans::kNo, Trans::kNo, m, n, k, x.data().data(), w.data().data(),
                out.mutable_data().data(), false);
  if (tracking({&x, &w})) {
    record(out, [x, w, out, m, n, k](Tape& t) {
      auto g = t.grad_of(out);
      if (x.requires_grad())
        kernels::gemm(Trans::kNo, Trans::kYes, m, k, n, g.data(), w.data().data(),
                      t.accumulator(x).data(), true);
      if (w.requires_grad())
        kernels::gemm(Trans::kYes, Trans::kNo, k, n, m, x.data().data(), g.data(),
                      t.accumulator(w).data(), true);
    });
  }
  return out;
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) shape_error("batched_matmul", a, b);
  const std::size_t groups = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  if ((transpose_b ? b.dim(2) : b.dim(1)) != k) shape_error("batched_matmul", a, b);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  Tensor out(Shape{groups, m, n});
  kernels::gemm_batched(Trans::kNo, transpose_b ? Trans::kYes : Trans::kNo, groups, m, n, k,
                        a.data().data(), b.data().data(), out.mutable_data().data(), false);
  if (tracking({&a, &b})) {
    record(out, [a, b, out, groups, m, n, k, transpose_b](Tape& t) {
      auto g = t.grad_of(out);
      if (a.requires_grad()) {
        kernels::gemm_batched(Trans::kNo, transpose_b ? Trans::kNo : Trans::kYes, groups, m, k, n,
                              g.data(), b.data().data(), t.accumulator(a).data(), true);
      }
      if (b.requires_grad()) {
        if (transpose_b)
          kernels::gemm_batched(Trans::kYes, Trans::kNo, groups, n, k, m, g.data(),
                                a.data().data(), t.accumulator(b).data(), true);
        else
          kernels::gemm_batched(Trans::kYes, Trans::kNo, groups, k, n, m, a.data().data(),
                                g.data(), t.accumulator(b).data(), true);
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] + bd[i];
  if (tracking({&a, &b})) {
    record(out, [a, b, out](Tape& t) {
      auto g = t.grad_of(out);
      for (const Tensor* in : {&a, &b}) {
        if (!in->requires_grad()) continue;
        auto acc = t.accumulator(*in);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0))
    shape_error("add_bias", x, bias);
  const std::size_t n = bias.dim(0);
  const std::size_t rows = x.numel() / n;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] = xd[r * n + j] + bd[j];
  if (tracking({&x, &bias})) {
    record(out, [x, bias, out, rows, n](Tape& t) {
      auto g = t.grad_of(out);
      if (x.requires_grad()) {
        auto acc = t.accumulator(x);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
      }
      if (bias.requires_grad()) {
        auto acc = t.accumulator(bias);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < n; ++j) acc[j] += g[r * n + j];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] * bd[i];
  if (tracking({&a, &b})) {
    record(out, [a, b, out](Tape& t) {
      auto g = t.grad_of(out);
      if (a.requires_grad()) {
        auto acc = t.accumulator(a);
        auto bd = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * bd[i];
      }
      if (b.requires_grad()) {
        auto acc = t.accumulator(b);
        auto ad = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * ad[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, Real factor) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] * factor;
  if (tracking({&x})) {
    record(out, [x, out, factor](Tape& t) {
      auto g = t.grad_of(out);
      auto acc = t.accumulator(x);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * factor;
    });
  }
  return out;
}

KinkMonitor::KinkMonitor() : previous_(active_monitor) { active_monitor = this; }

KinkMonitor::~KinkMonitor() { active_monitor = previous_; }

KinkMonitor* KinkMonitor::active() { return active_monitor; }

void KinkMonitor::fold(bool on) {
  hash_ ^= on ? 0x9eULL : 0x3dULL;
  hash_ *= 0x100000001b3ULL;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] > 0 ? xd[i] : Real{0};
  if (auto* m = KinkMonitor::active())
    for (Real v : xd) m->fold(v > 0);
  if (tracking({&x})) {
    record(out, [x, out](Tape& t) {
      auto g = t.grad_of(out);
      auto acc = t.accumulator(x);
      auto xd = x.data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xd[i] > 0) acc[i] += g[i];
    });
  }
  return out;
}

Tensor clamp_min(const Tensor& x, Real floor) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::max(xd[i], floor);
  if (auto* m = KinkMonitor::active())
    for (Real v : xd) m->fold(v >= floor);
  if (tracking({&x})) {
    record(out, [x, out, floor](Tape& t) {
      auto g = t.grad_of(out);
      auto acc = t.accumulator(x);
      auto xd = x.data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xd[i] >= floor) acc[i] += g[i];
    });
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  if (x.rank() < 1 || x.numel() == 0) throw ShapeError("softmax: empty tensor " + shape_str(x.shape()));
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  Tensor out(x.shape());
  kernels::softmax_rows(x.data().data(), out.mutable_data().data(), rows, cols);
  if (tracking({&x})) {
    record(out, [x, out, rows, cols](Tape& t) {
      auto g = t.grad_of(out);
      auto y = out.data();
      auto acc = t.accumulator(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * cols;
        Real dot = 0;
        for (std::size_t j = 0; j < cols; ++j) dot += g[base + j] * y[base + j];
        for (std::size_t j = 0; j < cols; ++j) acc[base + j] += y[base + j] * (g[base + j] - dot);
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() < 1 || x.numel() == 0)
    throw ShapeError("log_softmax: empty tensor " + shape_str(x.shape()));
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  Tensor out(x.shape());
  kernels::log_softmax_rows(x.data().data(), out.mutable_data().data(), rows, cols);
  if (tracking({&x})) {
    record(out, [x, out, rows, cols](Tape& t) {
      auto g = t.grad_of(out);
      auto y = out.data();
      auto acc = t.accumulator(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * cols;
        Real total = 0;
        for (std::size_t j = 0; j < cols; ++j) total += g[base + j];
        for (std::size_t j = 0; j < cols; ++j)
          acc[base + j] += g[base + j] - std::exp(y[base + j]) * total;
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  if (gain.rank() != 1 || bias.shape() != gain.shape() || x.rank() < 1 ||
      x.shape().back() != gain.dim(0))
    shape_error("layer_norm", x, gain);
  const std::size_t cols = gain.dim(0);
  const std::size_t rows = x.numel() / cols;
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<Real>>(x.numel());
  auto rstd = std::make_shared<std::vector<Real>>(rows);
  kernels::layer_norm_rows(x.data().data(), gain.data().data(), bias.data().data(),
                           out.mutable_data().data(), xhat->data(), rstd->data(), rows, cols, eps);
  if (tracking({&x, &gain, &bias})) {
    record(out, [x, gain, bias, out, xhat, rstd, rows, cols](Tape& t) {
      auto g = t.grad_of(out);
      auto gd = gain.data();
      const auto& xh = *xhat;
      if (x.requires_grad()) {
        auto acc = t.accumulator(x);
        const Real inv_n = Real{1} / static_cast<Real>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * cols;
          Real s1 = 0;
          Real s2 = 0;
          for (std::size_t j = 0; j < cols; ++j) {
            const Real dxh = g[base + j] * gd[j];
            s1 += dxh;
            s2 += dxh * xh[base + j];
          }
          const Real rs = (*rstd)[r];
          for (std::size_t j = 0; j < cols; ++j) {
            const Real dxh = g[base + j] * gd[j];
            acc[base + j] += rs * (dxh - s1 * inv_n - xh[base + j] * s2 * inv_n);
          }
        }
      }
      if (gain.requires_grad()) {
        auto acc = t.accumulator(gain);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < cols; ++j) acc[j] += g[r * cols + j] * xh[r * cols + j];
      }
      if (bias.requires_grad()) {
        auto acc = t.accumulator(bias);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < cols; ++j) acc[j] += g[r * cols + j];
      }
    });
  }
  return out;
}

Tensor embed(const Tensor& table, std::span<const TokenId> ids) {
  if (table.rank() != 2) throw ShapeError("embed: table must be 2-D, got " + shape_str(table.shape()));
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  Tensor out(Shape{ids.size(), d});
  auto o = out.mutable_data();
  auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw ShapeError("embed: id " + std::to_string(ids[i]) + " out of range for vocabulary of " +
                       std::to_string(vocab));
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                o.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  if (tracking({&table})) {
    std::vector<TokenId> saved(ids.begin(), ids.end());
    record(out, [table, out, saved = std::move(saved), d](Tape& t) {
      auto g = t.grad_of(out);
      auto acc = t.accumulator(table);
      for (std::size_t i = 0; i < saved.size(); ++i) {
        const std::size_t row = static_cast<std::size_t>(saved[i]) * d;
        for (std::size_t j = 0; j < d; ++j) acc[row + j] += g[i * d + j];
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, Real p, Rng& rng, bool train) {
  if (!train || p <= 0) return x;
  auto keep = std::make_shared<std::vector<Real>>(x.numel());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Real kept_scale = Real{1} / (Real{1} - p);
  for (auto& k : *keep) k = unif(rng) < p ? Real{0} : kept_scale;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xd[i] * (*keep)[i];
  if (tracking({&x})) {
    record(out, [x, out, keep](Tape& t) {
      auto g = t.grad_of(out);
      auto acc = t.accumulator(x);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i] * (*keep)[i];
    });
  }
  return out;
}

Tensor mask_fill(const Tensor& x, std::span<const std::uint8_t> mask, Real value) {
  if (mask.size() != x.numel())
    throw ShapeError("mask_fill: mask of " + std::to_string(mask.size()) +
                     " entries for tensor " + shape_str(x.shape()));
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xd = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = mask[i] ? value : xd[i];
  if (tracking({&x})) {
    auto saved = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
    record(out, [x, out, saved](Tape& t) {
      auto g = t.grad_of(out);
      auto acc = t.accumulator(x);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(*saved)[i]) acc[i] += g[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  Tensor out = Tensor::scalar(total);
  if (tracking({&x})) {
    record(out, [x, out](Tape& t) {
      const Real g = t.grad_of(out)[0];
      auto acc = t.accumulator(x);
      for (auto& a : acc) a += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), Real{1} / static_cast<Real>(x.numel()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out(std::move(shape), std::vector<Real>(x.data().begin(), x.data().end()));
  if (tracking({&x})) {
    record(out, [x, out](Tape& t) {
      auto g = t.grad_of(out);
      auto acc = t.accumulator(x);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw ShapeError("concat: scalar-shaped input");
  std::size_t lead = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1))
      shape_error("concat", parts.front(), p);
    lead += p.dim(0);
  }
  shape[0] = lead;
  std::vector<Real> data;
  data.reserve(numel_of(shape));
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  Tensor out(std::move(shape), std::move(data));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (Tape::active() != nullptr && any) {
    record(out, [parts, out](Tape& t) {
      auto g = t.grad_of(out);
      std::size_t offset = 0;
      for (const auto& p : parts) {
        if (p.requires_grad()) {
          auto acc = t.accumulator(p);
          for (std::size_t i = 0; i < p.numel(); ++i) acc[i] += g[offset + i];
        }
        offset += p.numel();
      }
    });
  }
  return out;
}

namespace {

// dst[b*H + h, t, d] <-> src[b, t, h*D + d]
void permute_heads(const Real* src, Real* dst, std::size_t batch, std::size_t len,
                   std::size_t heads, std::size_t depth, bool split, bool accumulate) {
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t d = 0; d < depth; ++d) {
          const std::size_t merged = (b * len + t) * heads * depth + h * depth + d;
          const std::size_t heads_first = ((b * heads + h) * len + t) * depth + d;
          const std::size_t from = split ? merged : heads_first;
          const std::size_t to = split ? heads_first : merged;
          if (accumulate)
            dst[to] += src[from];
          else
            dst[to] = src[from];
        }
}

}  // namespace

Tensor split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0)
    throw ShapeError("split_heads: cannot split " + shape_str(x.shape()) + " into " +
                     std::to_string(heads) + " heads");
  const std::size_t batch = x.dim(0), len = x.dim(1), depth = x.dim(2) / heads;
  Tensor out(Shape{batch * heads, len, depth});
  permute_heads(x.data().data(), out.mutable_data().data(), batch, len, heads, depth, true, false);
  if (tracking({&x})) {
    record(out, [x, out, batch, len, heads, depth](Tape& t) {
      permute_heads(t.grad_of(out).data(), t.accumulator(x).data(), batch, len, heads, depth,
                    false, true);
    });
  }
  return out;
}

Tensor merge_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(0) % heads != 0)
    throw ShapeError("merge_heads: cannot merge " + shape_str(x.shape()) + " over " +
                     std::to_string(heads) + " heads");
  const std::size_t batch = x.dim(0) / heads, len = x.dim(1), depth = x.dim(2);
  Tensor out(Shape{batch, len, heads * depth});
  permute_heads(x.data().data(), out.mutable_data().data(), batch, len, heads, depth, false, false);
  if (tracking({&x})) {
    record(out, [x, out, batch, len, heads, depth](Tape& t) {
      permute_heads(t.grad_of(out).data(), t.accumulator(x).data(), batch, len, heads, depth,
                    true, true);
    });
  }
  return out;
}

}  // namespace ssnmt::ops
