#pragma once

#include <cstdint>
#include <vector>

#include "wavestiff/tensor.hpp"

// Differentiable primitives. Every function records itself on the thread's
// active tape (if any) when one of its inputs requires a gradient.
namespace wavestiff::ad {

enum class Activation { kSigmoid, kTanh, kRelu };

// Cross-correlation out[o, i] = b[o] + sum_{c,j} w[o, c, j] * x[c, i*stride + j]
// over x extended with `pad` trailing zeros (no kernel flip).
// input: [C_in, T] or [B, C_in, T]; weight: [C_out, C_in / groups, K];
// bias: [C_out] or undefined. Output length floor((T + pad - K) / stride) + 1.
Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad, std::size_t groups = 1);

// Affine map over the last axis: input [..., D_in] x weight [D_in, D_out] + bias [D_out].
// bias may be undefined.
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor activation(const Tensor& input, Activation kind);
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::kSigmoid); }
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::kTanh); }
inline Tensor relu(const Tensor& x) { return activation(x, Activation::kRelu); }

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis);
// Stacks equally shaped tensors along a new axis.
Tensor stack(const std::vector<Tensor>& tensors, std::size_t axis);
Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
// Picks index `index` on `axis` and drops that axis.
Tensor select(const Tensor& x, std::size_t axis, std::size_t index);
// Gathers slices along `axis` (repeats allowed); gradients scatter-add back.
Tensor take(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& indices);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

// Max over the forward window [t, t + window) on the last axis; the window is
// truncated at the end of the sequence, so output length equals input length.
Tensor max_pool1d(const Tensor& x, std::size_t window);

// [B, E] -> [T, B, E], the same row at every step.
Tensor repeat_steps(const Tensor& x, std::size_t steps);

// x: [T, B, H]; indices[b] lists N time steps for batch column b.
// Returns [N, B, H] with out[n, b] = x[indices[b][n], b].
Tensor gather_steps(const Tensor& x, const std::vector<std::vector<std::size_t>>& indices);

Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Inverted dropout. Identity when !training or rate == 0. The mask depends
// only on (seed, element index), so a fixed seed reproduces it exactly.
Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed);

// While alive, records how close relu inputs come to 0 and how close the two
// largest entries of a max_pool1d window come to each other. Exact zeros and
// exact ties are skipped. Gradient checks use it to keep finite-difference
// steps away from non-differentiable points.
class KinkProbe {
 public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;

  double min_gap() const { return min_gap_; }
  void note(double gap) {
    if (gap > 0.0 && gap < min_gap_) min_gap_ = gap;
  }

 private:
  double min_gap_;
  KinkProbe* previous_;
};

}  // namespace wavestiff::ad
