#include "wavestiff/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "wavestiff/error.hpp"

namespace wavestiff::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<double> detail::TensorImpl::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (ad::numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " data elements");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data.assign(data.begin(), data.end());
  Tensor t(std::move(impl));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor make_result(Shape shape, Buffer data) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  if (value) {
    impl_->grad_buffer();
  } else {
    impl_->grad.clear();
  }
}

bool Tensor::is_leaf() const { return impl_->is_leaf; }

std::span<const double> Tensor::grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() { return impl_->grad_buffer(); }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto t = make_result(shape(), impl_->data);
  t.impl_->requires_grad = impl_->requires_grad;
  if (t.impl_->requires_grad) t.impl_->grad_buffer();
  return t;
}

Tensor Tensor::detach() const { return make_result(shape(), impl_->data); }

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void Tape::record(const Tensor& output, const std::vector<Tensor>& inputs, BackwardFn backward) {
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!any) return;
  Record rec;
  rec.output = output.impl();
  rec.output->requires_grad = true;
  rec.output->is_leaf = false;
  rec.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.defined()) rec.inputs.push_back(in.impl());
  }
  rec.backward = std::move(backward);
  records_.push_back(std::move(rec));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;  // constant loss: nothing to propagate

  for (auto& rec : records_) {
    rec.output->grad.assign(rec.output->data.size(), 0.0);
  }
  loss.impl()->grad_buffer()[0] += 1.0;

  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    const auto& g = it->output->grad;
    if (std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) continue;
    it->backward(g);
  }
}

void Tape::clear() { records_.clear(); }

void backward(const Tensor& loss, Tape& tape) { tape.backward(loss); }

}  // namespace wavestiff::ad
