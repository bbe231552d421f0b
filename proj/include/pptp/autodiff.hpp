#pragma once

// Dense row-major arrays with a tape-based reverse-mode gradient engine.
//
// Every differentiable operation evaluates eagerly. When a Tape is active on
// the calling thread (see TapeScope) and at least one input requires a
// gradient, the operation appends a backward closure to that tape. Calling
// Tape::backward(loss) replays the closures in reverse recording order.
//
// Leaf gradients accumulate across backward calls until zero_grad() is called.
// Intermediate gradients are reset at the start of every backward pass.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <new>
#include <vector>

namespace pptp::ad {

using Shape = std::vector<std::size_t>;

// Leaves new elements uninitialised on resize; every op writes its output.
// Storage is 64-byte aligned so vectorised kernels split the work the same
// way on every run, which keeps results bitwise reproducible.
template <class T>
struct UninitAllocator : std::allocator<T> {
  static constexpr std::align_val_t kAlign{64};
  template <class U>
  struct rebind {
    using other = UninitAllocator<U>;
  };
  UninitAllocator() = default;
  template <class U>
  UninitAllocator(const UninitAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using Buffer = std::vector<double, UninitAllocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until a gradient flows in
  bool requires_grad = false;
  bool is_leaf = true;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const;

  // Zero-length span when no gradient has reached this tensor.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Same values, no history, no gradient.
  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<Node> node_;
};

class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::shared_ptr<Node> out, BackwardFn fn);

  // Populates gradients of every tracked tensor that reaches `loss`.
  // Throws ShapeError if loss is not a single element.
  void backward(const Tensor& loss);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::shared_ptr<Node> out;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

// Makes `tape` the active tape of this thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording for the scope lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// ---- primitives ----------------------------------------------------------
//
// Binary add/mul broadcast the right operand when it has the same shape as
// the left, is a row vector matching the last dimension, or is a single
// element.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Rank-2 concatenation along axis 0 (rows) or 1 (columns).
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Rank-2 slice of `length` rows (axis 0) or columns (axis 1).
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

// tanh-form GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& a);
// Natural log; throws ValidationError on a non-positive element.
Tensor log(const Tensor& a);
Tensor softmax(const Tensor& a, std::size_t axis);

inline constexpr double kLayerNormEps = 1e-5;
// Row-wise (x - mean) / sqrt(var + eps) * gain. No additive term.
Tensor layernorm_nobias(const Tensor& x, const Tensor& gain);

// Rows of `table` [V,d] picked by `indices` -> [n,d].
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices);

// Rank-2 mean; axis 0 -> [1,n], axis 1 -> [m,1].
Tensor mean_pool(const Tensor& a, std::size_t axis);
Tensor sum(const Tensor& a);

// Scalar loss -log softmax(logits)[cls] for a single row of logits.
Tensor cross_entropy(const Tensor& logits, std::size_t cls);

// Inverted dropout. Identity when p == 0.
Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng);

// Non-differentiable helpers.
std::vector<double> softmax_values(std::span<const double> logits);

}  // namespace pptp::ad
