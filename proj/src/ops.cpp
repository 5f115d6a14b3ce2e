#include "wavestiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "wavestiff/error.hpp"

namespace wavestiff::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

thread_local KinkProbe* t_probe = nullptr;

constexpr std::size_t kDirectConvLimit = 16;

void record(const Tensor& out, const std::vector<Tensor>& inputs, BackwardFn fn) {
  if (Tape* tape = active_tape()) tape->record(out, inputs, std::move(fn));
}

// Gradient buffer of an input, or an empty span when it does not need one.
std::span<double> grad_of(const ImplPtr& impl) {
  if (!impl || !impl->requires_grad) return {};
  return impl->grad_buffer();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

// Fills col[(c * K + k), t] = x[c, t * stride + k] (zero beyond T).
void im2col(const double* x, std::size_t channels, std::size_t length, std::size_t kernel,
            std::size_t stride, std::size_t out_len, double* col) {
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xc = x + c * length;
    for (std::size_t k = 0; k < kernel; ++k) {
      double* row = col + (c * kernel + k) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::size_t src = t * stride + k;
        row[t] = src < length ? xc[src] : 0.0;
      }
    }
  }
}

void col2im(const double* col, std::size_t channels, std::size_t length, std::size_t kernel,
            std::size_t stride, std::size_t out_len, double* dx) {
  for (std::size_t c = 0; c < channels; ++c) {
    double* dxc = dx + c * length;
    for (std::size_t k = 0; k < kernel; ++k) {
      const double* row = col + (c * kernel + k) * out_len;
      for (std::size_t t = 0; t < out_len; ++t) {
        const std::size_t src = t * stride + k;
        if (src < length) dxc[src] += row[t];
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// conv1d

Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad, std::size_t groups) {
  if (input.rank() != 2 && input.rank() != 3) {
    throw DimensionError("conv1d: input must be [C, T] or [B, C, T], got " + shape_str(input.shape()));
  }
  if (weight.rank() != 3) {
    throw DimensionError("conv1d: weight must be [C_out, C_in/groups, K], got " + shape_str(weight.shape()));
  }
  if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
  if (groups < 1) throw ConfigError("conv1d: groups must be >= 1");

  const bool batched = input.rank() == 3;
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t c_in = input.dim(batched ? 1 : 0);
  const std::size_t length = input.dim(batched ? 2 : 1);
  const std::size_t c_out = weight.dim(0);
  const std::size_t cg = weight.dim(1);
  const std::size_t kernel = weight.dim(2);

  if (c_in % groups != 0 || c_out % groups != 0 || cg * groups != c_in) {
    throw DimensionError("conv1d: input channel axis (" + std::to_string(c_in) + ") and weight axes " +
                         shape_str(weight.shape()) + " disagree for groups=" + std::to_string(groups));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    throw DimensionError("conv1d: bias shape " + shape_str(bias.shape()) + " does not match C_out=" +
                         std::to_string(c_out));
  }
  if (kernel == 0 || kernel > length + pad) {
    throw ConfigError("conv1d: kernel size " + std::to_string(kernel) + " exceeds padded length " +
                      std::to_string(length + pad));
  }

  const std::size_t out_len = (length + pad - kernel) / stride + 1;
  const std::size_t og = c_out / groups;
  const std::size_t ck = cg * kernel;

  Buffer out(batch * c_out * out_len, 0.0);
  Buffer col(ck * out_len);
  const double* x = input.data().data();
  const double* w = weight.data().data();
  // Small receptive fields (the wavelet stem) use a plain loop that sums taps
  // in order j = 0..K-1, matching a scalar reference bit for bit.
  const bool direct = ck <= kDirectConvLimit;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      const double* xg = x + (b * c_in + g * cg) * length;
      double* og_out = out.data() + (b * c_out + g * og) * out_len;
      if (direct) {
        for (std::size_t o = 0; o < og; ++o) {
          const double* wo = w + (g * og + o) * ck;
          for (std::size_t t = 0; t < out_len; ++t) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cg; ++c) {
              for (std::size_t k = 0; k < kernel; ++k) {
                const std::size_t src = t * stride + k;
                if (src < length) acc += wo[c * kernel + k] * xg[c * length + src];
              }
            }
            og_out[o * out_len + t] = acc;
          }
        }
        continue;
      }
      im2col(xg, cg, length, kernel, stride, out_len, col.data());
      ConstMapMat wg(w + g * og * ck, og, ck);
      ConstMapMat cm(col.data(), ck, out_len);
      MapMat om(og_out, og, out_len);
      om.noalias() = wg * cm;
    }
    if (bias.defined()) {
      for (std::size_t o = 0; o < c_out; ++o) {
        double* row = out.data() + (b * c_out + o) * out_len;
        const double bo = bias[o];
        for (std::size_t t = 0; t < out_len; ++t) row[t] += bo;
      }
    }
  }

  Shape out_shape = batched ? Shape{batch, c_out, out_len} : Shape{c_out, out_len};
  Tensor result = make_result(std::move(out_shape), std::move(out));

  ImplPtr xi = input.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
  record(result, {input, weight, bias},
         [=](std::span<const double> gout) {
           auto dx = grad_of(xi);
           auto dw = grad_of(wi);
           auto db = grad_of(bi);
           Buffer colb(ck * out_len), dcol(ck * out_len);
           for (std::size_t b = 0; b < batch; ++b) {
             for (std::size_t g = 0; g < groups; ++g) {
               const double* xbg = xi->data.data() + (b * c_in + g * cg) * length;
               ConstMapMat go(gout.data() + (b * c_out + g * og) * out_len, og, out_len);
               if (!dw.empty()) {
                 im2col(xbg, cg, length, kernel, stride, out_len, colb.data());
                 ConstMapMat cm(colb.data(), ck, out_len);
                 MapMat dwg(dw.data() + g * og * ck, og, ck);
                 dwg.noalias() += go * cm.transpose();
               }
               if (!dx.empty()) {
                 ConstMapMat wg(wi->data.data() + g * og * ck, og, ck);
                 MapMat dc(dcol.data(), ck, out_len);
                 dc.noalias() = wg.transpose() * go;
                 col2im(dcol.data(), cg, length, kernel, stride, out_len, dx.data() + (b * c_in + g * cg) * length);
               }
             }
             if (!db.empty()) {
               for (std::size_t o = 0; o < c_out; ++o) {
                 const double* row = gout.data() + (b * c_out + o) * out_len;
                 double s = 0.0;
                 for (std::size_t t = 0; t < out_len; ++t) s += row[t];
                 db[o] += s;
               }
             }
           }
         });
  return result;
}

// ---------------------------------------------------------------------------
// linear

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() < 1 || weight.rank() != 2) {
    throw DimensionError("linear: expected input [..., D_in] and weight [D_in, D_out], got " +
                         shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  }
  const std::size_t d_in = input.shape().back();
  if (weight.dim(0) != d_in) {
    throw DimensionError("linear: input last axis " + std::to_string(d_in) + " != weight axis 0 (" +
                         std::to_string(weight.dim(0)) + ")");
  }
  const std::size_t d_out = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d_out)) {
    throw DimensionError("linear: bias shape " + shape_str(bias.shape()) + " does not match D_out=" +
                         std::to_string(d_out));
  }
  const std::size_t rows = input.numel() / d_in;

  Buffer out(rows * d_out);
  {
    ConstMapMat x(input.data().data(), rows, d_in);
    ConstMapMat w(weight.data().data(), d_in, d_out);
    MapMat y(out.data(), rows, d_out);
    y.noalias() = x * w;
    if (bias.defined()) {
      Eigen::Map<const Eigen::RowVectorXd> bv(bias.data().data(), d_out);
      y.rowwise() += bv;
    }
  }
  Shape out_shape = input.shape();
  out_shape.back() = d_out;
  Tensor result = make_result(std::move(out_shape), std::move(out));

  ImplPtr xi = input.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : nullptr;
  record(result, {input, weight, bias}, [=](std::span<const double> gout) {
    ConstMapMat gy(gout.data(), rows, d_out);
    if (auto dx = grad_of(xi); !dx.empty()) {
      ConstMapMat w(wi->data.data(), d_in, d_out);
      MapMat(dx.data(), rows, d_in).noalias() += gy * w.transpose();
    }
    if (auto dw = grad_of(wi); !dw.empty()) {
      ConstMapMat x(xi->data.data(), rows, d_in);
      MapMat(dw.data(), d_in, d_out).noalias() += x.transpose() * gy;
    }
    if (auto db = grad_of(bi); !db.empty()) {
      Eigen::Map<Eigen::RowVectorXd>(db.data(), d_out) += gy.colwise().sum();
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// elementwise

Tensor activation(const Tensor& input, Activation kind) {
  const auto x = input.data();
  Buffer out(x.size());
  switch (kind) {
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] >= 0.0) {
          out[i] = 1.0 / (1.0 + std::exp(-x[i]));
        } else {
          const double e = std::exp(x[i]);
          out[i] = e / (1.0 + e);
        }
      }
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      if (t_probe) {
        for (double v : x) t_probe->note(std::abs(v));
      }
      break;
  }
  Tensor result = make_result(input.shape(), std::move(out));
  ImplPtr xi = input.impl();
  std::weak_ptr<detail::TensorImpl> yw = result.impl();
  record(result, {input}, [xi, yw, kind](std::span<const double> gout) {
    auto dx = grad_of(xi);
    if (dx.empty()) return;
    const auto yi = yw.lock();
    const auto& y = yi->data;
    const auto& xv = xi->data;
    switch (kind) {
      case Activation::kSigmoid:
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gout[i] * y[i] * (1.0 - y[i]);
        break;
      case Activation::kTanh:
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += gout[i] * (1.0 - y[i] * y[i]);
        break;
      case Activation::kRelu:
        for (std::size_t i = 0; i < dx.size(); ++i) {
          if (xv[i] > 0.0) dx[i] += gout[i];
        }
        break;
    }
  });
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  Tensor result = make_result(a.shape(), std::move(out));
  ImplPtr ai = a.impl(), bi = b.impl();
  record(result, {a, b}, [ai, bi](std::span<const double> g) {
    for (const auto& p : {ai, bi}) {
      auto d = grad_of(p);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  });
  return result;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  Tensor result = make_result(a.shape(), std::move(out));
  ImplPtr ai = a.impl(), bi = b.impl();
  record(result, {a, b}, [ai, bi](std::span<const double> g) {
    auto da = grad_of(ai);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i];
    auto db = grad_of(bi);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] -= g[i];
  });
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  Buffer out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  Tensor result = make_result(a.shape(), std::move(out));
  ImplPtr ai = a.impl(), bi = b.impl();
  record(result, {a, b}, [ai, bi](std::span<const double> g) {
    if (auto da = grad_of(ai); !da.empty()) {
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bi->data[i];
    }
    if (auto db = grad_of(bi); !db.empty()) {
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * ai->data[i];
    }
  });
  return result;
}

Tensor scale(const Tensor& x, double factor) {
  const auto v = x.data();
  Buffer out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * factor;
  Tensor result = make_result(x.shape(), std::move(out));
  ImplPtr xi = x.impl();
  record(result, {x}, [xi, factor](std::span<const double> g) {
    auto d = grad_of(xi);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * factor;
  });
  return result;
}

Tensor sum(const Tensor& x) {
  const auto v = x.data();
  Tensor result = make_result({}, {std::accumulate(v.begin(), v.end(), 0.0)});
  ImplPtr xi = x.impl();
  record(result, {x}, [xi](std::span<const double> g) {
    auto d = grad_of(xi);
    for (auto& di : d) di += g[0];
  });
  return result;
}

// ---------------------------------------------------------------------------
// shape manipulation

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis) {
  if (tensors.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = tensors.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis " + std::to_string(axis) + " out of range");
  std::size_t total = 0;
  for (const auto& t : tensors) {
    const Shape& s = t.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (d != axis && s[d] != ref[d]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(ref) +
                           " outside axis " + std::to_string(axis));
    }
    total += s[axis];
  }
  const std::size_t outer = prod(ref, 0, axis);
  const std::size_t inner = prod(ref, axis + 1, ref.size());
  Shape out_shape = ref;
  out_shape[axis] = total;
  Buffer out(outer * total * inner);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : tensors) {
    offsets.push_back(off);
    const std::size_t chunk = t.dim(axis) * inner;
    const double* src = t.data().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * chunk, chunk, out.data() + o * total * inner + off * inner);
    }
    off += t.dim(axis);
  }
  Tensor result = make_result(std::move(out_shape), std::move(out));
  std::vector<ImplPtr> ins;
  for (const auto& t : tensors) ins.push_back(t.impl());
  record(result, tensors, [ins, offsets, outer, inner, total, axis](std::span<const double> g) {
    for (std::size_t k = 0; k < ins.size(); ++k) {
      auto d = grad_of(ins[k]);
      if (d.empty()) continue;
      const std::size_t chunk = ins[k]->shape[axis] * inner;
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = g.data() + o * total * inner + offsets[k] * inner;
        double* dst = d.data() + o * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
    }
  });
  return result;
}

Tensor stack(const std::vector<Tensor>& tensors, std::size_t axis) {
  if (tensors.empty()) throw DimensionError("stack: no inputs");
  std::vector<Tensor> expanded;
  expanded.reserve(tensors.size());
  for (const auto& t : tensors) {
    if (t.shape() != tensors.front().shape()) {
      throw DimensionError("stack: shape " + shape_str(t.shape()) + " differs from " +
                           shape_str(tensors.front().shape()));
    }
    Shape s = t.shape();
    if (axis > s.size()) throw DimensionError("stack: axis out of range");
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(t, std::move(s)));
  }
  return concat(expanded, axis);
}

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || start + length > x.dim(axis)) {
    throw DimensionError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") invalid for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  const std::size_t outer = prod(s, 0, axis);
  const std::size_t inner = prod(s, axis + 1, s.size());
  const std::size_t full = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  Buffer out(outer * length * inner);
  const double* src = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src + (o * full + start) * inner, length * inner, out.data() + o * length * inner);
  }
  Tensor result = make_result(std::move(out_shape), std::move(out));
  ImplPtr xi = x.impl();
  record(result, {x}, [=](std::span<const double> g) {
    auto d = grad_of(xi);
    if (d.empty()) return;
    for (std::size_t o = 0; o < outer; ++o) {
      double* dst = d.data() + (o * full + start) * inner;
      const double* gs = g.data() + o * length * inner;
      for (std::size_t i = 0; i < length * inner; ++i) dst[i] += gs[i];
    }
  });
  return result;
}

Tensor select(const Tensor& x, std::size_t axis, std::size_t index) {
  Tensor n = narrow(x, axis, index, 1);
  Shape s = x.shape();
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
  // narrow() already produced a fresh buffer; reshaping it in place keeps the
  // tape to one record per selection.
  n.impl()->shape = std::move(s);
  return n;
}

Tensor take(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& indices) {
  if (axis >= x.rank()) throw DimensionError("take: axis out of range for " + shape_str(x.shape()));
  const Shape& s = x.shape();
  const std::size_t full = s[axis];
  for (auto i : indices) {
    if (i >= full) {
      throw DimensionError("take: index " + std::to_string(i) + " out of range for axis of size " +
                           std::to_string(full));
    }
  }
  const std::size_t outer = prod(s, 0, axis);
  const std::size_t inner = prod(s, axis + 1, s.size());
  const std::size_t n = indices.size();
  Shape out_shape = s;
  out_shape[axis] = n;
  Buffer out(outer * n * inner);
  const double* src = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      std::copy_n(src + (o * full + indices[k]) * inner, inner, out.data() + (o * n + k) * inner);
    }
  }
  Tensor result = make_result(std::move(out_shape), std::move(out));
  ImplPtr xi = x.impl();
  record(result, {x}, [=](std::span<const double> g) {
    auto d = grad_of(xi);
    if (d.empty()) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < n; ++k) {
        double* dst = d.data() + (o * full + indices[k]) * inner;
        const double* gs = g.data() + (o * n + k) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += gs[i];
      }
    }
  });
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor result = make_result(std::move(shape), Buffer(x.data().begin(), x.data().end()));
  ImplPtr xi = x.impl();
  record(result, {x}, [xi](std::span<const double> g) {
    auto d = grad_of(xi);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
  });
  return result;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) throw DimensionError("permute: axis list does not match rank of " + shape_str(s));
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw DimensionError("permute: invalid axis permutation");
    seen[a] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t d = r; d-- > 1;) in_strides[d - 1] = in_strides[d] * s[d];
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t d = 0; d < r; ++d) {
    out_shape[d] = s[axes[d]];
    src_stride[d] = in_strides[axes[d]];
  }
  // map[i] = flat source index of output element i
  const std::size_t n = x.numel();
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    map[i] = src;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < out_shape[d]) {
        src += src_stride[d];
        break;
      }
      src -= src_stride[d] * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
  Buffer out(n);
  const double* xv = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[map[i]];
  Tensor result = make_result(std::move(out_shape), std::move(out));
  ImplPtr xi = x.impl();
  record(result, {x}, [xi, map = std::move(map)](std::span<const double> g) {
    auto d = grad_of(xi);
    if (d.empty()) return;
    for (std::size_t i = 0; i < map.size(); ++i) d[map[i]] += g[i];
  });
  return result;
}

KinkProbe::KinkProbe() : min_gap_(std::numeric_limits<double>::infinity()), previous_(t_probe) { t_probe = this; }

KinkProbe::~KinkProbe() { t_probe = previous_; }

Tensor max_pool1d(const Tensor& x, std::size_t window) {
  if (x.rank() < 1 || window < 1) throw ConfigError("max_pool1d: need rank >= 1 and window >= 1");
  const std::size_t length = x.shape().back();
  const std::size_t rows = x.numel() / std::max<std::size_t>(length, 1);
  Buffer out(x.numel());
  std::vector<std::size_t> arg(x.numel());
  const double* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv + r * length;
    for (std::size_t t = 0; t < length; ++t) {
      std::size_t best = t;
      const std::size_t end = std::min(length, t + window);
      for (std::size_t j = t + 1; j < end; ++j) {
        if (row[j] > row[best]) best = j;
      }
      out[r * length + t] = row[best];
      arg[r * length + t] = r * length + best;
      if (t_probe) {
        for (std::size_t j = t; j < end; ++j) {
          if (j != best) t_probe->note(row[best] - row[j]);
        }
      }
    }
  }
  Tensor result = make_result(x.shape(), std::move(out));
  ImplPtr xi = x.impl();
  record(result, {x}, [xi, arg = std::move(arg)](std::span<const double> g) {
    auto d = grad_of(xi);
    if (d.empty()) return;
    for (std::size_t i = 0; i < arg.size(); ++i) d[arg[i]] += g[i];
  });
  return result;
}

Tensor repeat_steps(const Tensor& x, std::size_t steps) {
  if (x.rank() != 2) throw DimensionError("repeat_steps: expected [B, E], got " + shape_str(x.shape()));
  const std::size_t n = x.numel();
  Buffer out(steps * n);
  for (std::size_t t = 0; t < steps; ++t) std::copy_n(x.data().data(), n, out.data() + t * n);
  Tensor result = make_result({steps, x.dim(0), x.dim(1)}, std::move(out));
  ImplPtr xi = x.impl();
  record(result, {x}, [xi, steps, n](std::span<const double> g) {
    auto d = grad_of(xi);
    if (d.empty()) return;
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t i = 0; i < n; ++i) d[i] += g[t * n + i];
    }
  });
  return result;
}

Tensor gather_steps(const Tensor& x, const std::vector<std::vector<std::size_t>>& indices) {
  if (x.rank() != 3) throw DimensionError("gather_steps: expected [T, B, H], got " + shape_str(x.shape()));
  const std::size_t steps = x.dim(0), batch = x.dim(1), hidden = x.dim(2);
  if (indices.size() != batch) {
    throw DimensionError("gather_steps: " + std::to_string(indices.size()) + " index lists for batch of " +
                         std::to_string(batch));
  }
  const std::size_t n = indices.empty() ? 0 : indices.front().size();
  for (const auto& list : indices) {
    if (list.size() != n) throw DimensionError("gather_steps: ragged index lists");
    for (auto t : list) {
      if (t >= steps) throw DimensionError("gather_steps: step index " + std::to_string(t) + " out of range");
    }
  }
  Buffer out(n * batch * hidden);
  std::vector<std::size_t> src(n * batch);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t b = 0; b < batch; ++b) {
      src[k * batch + b] = (indices[b][k] * batch + b) * hidden;
      std::copy_n(x.data().data() + src[k * batch + b], hidden, out.data() + (k * batch + b) * hidden);
    }
  }
  Tensor result = make_result({n, batch, hidden}, std::move(out));
  ImplPtr xi = x.impl();
  record(result, {x}, [xi, src = std::move(src), hidden](std::span<const double> g) {
    auto d = grad_of(xi);
    if (d.empty()) return;
    for (std::size_t r = 0; r < src.size(); ++r) {
      for (std::size_t h = 0; h < hidden; ++h) d[src[r] + h] += g[r * hidden + h];
    }
  });
  return result;
}

// ---------------------------------------------------------------------------

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  const auto p = pred.data(), t = target.data();
  const double n = static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    acc += d * d;
  }
  Tensor result = make_result({}, {acc / n});
  ImplPtr pi = pred.impl(), ti = target.impl();
  record(result, {pred, target}, [pi, ti, n](std::span<const double> g) {
    auto dp = grad_of(pi);
    auto dt = grad_of(ti);
    for (std::size_t i = 0; i < pi->data.size(); ++i) {
      const double d = 2.0 * (pi->data[i] - ti->data[i]) / n * g[0];
      if (!dp.empty()) dp[i] += d;
      if (!dt.empty()) dt[i] -= d;
    }
  });
  return result;
}

Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  const double factor = 1.0 / (1.0 - rate);
  Buffer mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? factor : 0.0;
  Buffer out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  Tensor result = make_result(x.shape(), std::move(out));
  ImplPtr xi = x.impl();
  record(result, {x}, [xi, mask = std::move(mask)](std::span<const double> g) {
    auto d = grad_of(xi);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * mask[i];
  });
  return result;
}

}  // namespace wavestiff::ad
