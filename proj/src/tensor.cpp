#include "ssnmt/tensor.hpp"

#include <atomic>
#include <unordered_set>

namespace ssnmt {
namespace {

std::atomic<std::uint64_t> next_id{1};
thread_local Tape* active_tape = nullptr;

}  // namespace

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, Real fill) : storage_(std::make_shared<Storage>()) {
  storage_->data.assign(numel_of(shape), fill);
  storage_->shape = std::move(shape);
  storage_->id = next_id.fetch_add(1, std::memory_order_relaxed);
}

Tensor::Tensor(Shape shape, std::vector<Real> data) : storage_(std::make_shared<Storage>()) {
  if (data.size() != numel_of(shape))
    throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  storage_->shape = std::move(shape);
  storage_->data = std::move(data);
  storage_->id = next_id.fetch_add(1, std::memory_order_relaxed);
}

Tensor Tensor::scalar(Real value) { return Tensor(Shape{1}, std::vector<Real>{value}); }

const Shape& Tensor::shape() const { return storage_->shape; }

std::size_t Tensor::dim(std::size_t i) const { return storage_->shape.at(i); }

std::size_t Tensor::numel() const { return storage_->data.size(); }

std::uint64_t Tensor::id() const { return storage_->id; }

std::span<const Real> Tensor::data() const { return storage_->data; }

std::span<Real> Tensor::mutable_data() { return storage_->data; }

Real Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return storage_->data[0];
}

bool Tensor::requires_grad() const { return storage_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  storage_->requires_grad = on;
  return *this;
}

Tensor Tensor::clone() const { return Tensor(shape(), storage_->data); }

std::span<const Real> Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return {};
  return it->second;
}

Tape* Tape::active() { return active_tape; }

void Tape::record(const Tensor& output, BackwardFn fn) {
  nodes_.push_back(Node{output, std::move(fn)});
}

std::span<const Real> Tape::grad_of(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return {};
  return it->second;
}

std::span<Real> Tape::accumulator(const Tensor& t) {
  auto [it, inserted] = grads_.try_emplace(t.id());
  if (inserted) it->second.assign(t.numel(), Real{0});
  return it->second;
}

Gradients Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  Gradients out;
  if (!loss.requires_grad()) {
    clear();
    return out;
  }
  accumulator(loss)[0] += Real{1};
  std::unordered_set<std::uint64_t> produced;
  produced.reserve(nodes_.size());
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    produced.insert(it->output.id());
    if (grads_.count(it->output.id()) == 0) continue;
    it->fn(*this);
  }
  for (auto& [id, g] : grads_)
    if (produced.count(id) == 0) out.grads_.emplace(id, std::move(g));
  clear();
  return out;
}

void Tape::clear() {
  nodes_.clear();
  grads_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(active_tape) { active_tape = &tape; }
TapeScope::~TapeScope() { active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(active_tape) { active_tape = nullptr; }
NoGradScope::~NoGradScope() { active_tape = previous_; }

}  // namespace ssnmt
