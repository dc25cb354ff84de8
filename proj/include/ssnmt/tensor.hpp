#pragma once

// Dense tensors with tape-based reverse-mode differentiation.
//
// A Tape records one node per op whose inputs require gradients while the
// tape is active on the calling thread (see TapeScope). Nodes are appended in
// execution order, which is already a valid topological order, so backward()
// simply walks them in reverse. Gradient accumulators live in the tape, keyed
// by tensor id; parameters never carry gradient state themselves.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssnmt/common.hpp"

namespace ssnmt {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0);
  Tensor(Shape shape, std::vector<Real> data);
  static Tensor scalar(Real value);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t i) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::uint64_t id() const;

  std::span<const Real> data() const;
  // Writes go to the shared storage; every handle to this tensor sees them.
  std::span<Real> mutable_data();
  Real item() const;
  Real operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  // Deep copy with a fresh id; the copy does not require grad.
  Tensor clone() const;

 private:
  struct Storage {
    Shape shape;
    std::vector<Real> data;
    bool requires_grad = false;
    std::uint64_t id = 0;
  };
  std::shared_ptr<Storage> storage_;
};

// Gradients of a backward pass for every leaf tensor that required grad.
class Gradients {
 public:
  // Empty span when the tensor received no gradient (it did not influence
  // the loss); callers treat that as all zeros.
  std::span<const Real> of(const Tensor& t) const;
  bool contains(const Tensor& t) const { return grads_.count(t.id()) != 0; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::uint64_t, std::vector<Real>> grads_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Tape recording on this thread, or nullptr.
  static Tape* active();

  void record(const Tensor& output, BackwardFn fn);

  // Upstream gradient of an op output; empty if nothing flowed into it.
  std::span<const Real> grad_of(const Tensor& t) const;
  // Accumulator for an op input, zero-initialised on first use.
  std::span<Real> accumulator(const Tensor& t);

  // Reverse pass from a scalar loss. Consumes the recorded nodes.
  Gradients backward(const Tensor& loss);

  std::size_t num_nodes() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  std::unordered_map<std::uint64_t, std::vector<Real>> grads_;
};

// Activates a tape on the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording (used for the gradient-detached teacher branch).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace ssnmt
