#pragma once

#include <random>

#include "wavestiff/tensor.hpp"

namespace wavestiff {

using Rng = std::mt19937_64;

// Trainable tensor with entries drawn uniformly from [-bound, bound].
ad::Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng, bool requires_grad = true);

}  // namespace wavestiff
