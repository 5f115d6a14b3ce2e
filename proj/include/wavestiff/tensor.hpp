#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace wavestiff::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Allocator returning 64-byte aligned storage. Vectorized kernels peel
// differently depending on alignment, so fixed alignment keeps results
// identical from call to call.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

namespace detail {

struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  bool is_leaf = true;

  std::span<double> grad_buffer();  // allocates zeros on first use
};

}  // namespace detail

// Dense row-major array of doubles. Copies of a Tensor share storage, which
// is what lets a tape hand gradients back to the parameters a model holds.
// Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access; bypasses the tape. Intended for parameter updates
  // and for building inputs.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  // Marks the tensor as a trainable leaf and allocates a zero gradient.
  void set_requires_grad(bool value);
  bool is_leaf() const;

  // Gradient buffer; zeros when nothing has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor clone() const;   // deep copy of data; keeps requires_grad, drops grad
  Tensor detach() const;  // deep copy of data with no gradient tracking

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;
  friend Tensor make_result(Shape shape, Buffer data);

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Builds an op output tensor (not yet recorded).
Tensor make_result(Shape shape, Buffer data);

// Backward rule of one recorded operation: receives the gradient of the
// operation's output and accumulates into its inputs.
using BackwardFn = std::function<void(std::span<const double> out_grad)>;

// Ordered record of differentiable operations. Operations are appended in
// execution order, so the record list is always topologically sorted.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Records `output = op(inputs)`. Nothing is recorded when no input requires
  // a gradient; otherwise `output` becomes a non-leaf requiring gradient.
  void record(const Tensor& output, const std::vector<Tensor>& inputs, BackwardFn backward);

  // Populates gradients of every requires_grad tensor reachable from `loss`.
  // Leaf gradients accumulate across calls; intermediate gradients are
  // recomputed from scratch each call.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const { return records_.size(); }

 private:
  struct Record {
    std::shared_ptr<detail::TensorImpl> output;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    BackwardFn backward;
  };
  std::vector<Record> records_;
};

// Tape that operations on the current thread record onto, or nullptr when
// running in pure inference mode.
Tape* active_tape();

// Installs a tape as the thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Convenience for `active_tape()->backward(loss)`.
void backward(const Tensor& loss, Tape& tape);

}  // namespace wavestiff::ad
