#include "wavestiff/init.hpp"

namespace wavestiff {

ad::Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(ad::numel(shape));
  for (auto& v : data) v = dist(rng);
  return ad::Tensor::from(std::move(shape), std::move(data), requires_grad);
}

}  // namespace wavestiff
