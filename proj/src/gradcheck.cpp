#include "wavestiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "wavestiff/error.hpp"

namespace wavestiff::ad {

namespace {

double evaluate(const std::function<Tensor()>& fn) {
  NoGradScope no_grad;
  const Tensor loss = fn();
  if (loss.numel() != 1) throw ContractError("finite_difference_check: fn must return a scalar");
  return loss.item();
}

}  // namespace

GradCheckResult finite_difference_check(const std::function<Tensor()>& fn, std::vector<Tensor> params,
                                        double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_difference_check: eps must be positive");

  std::vector<bool> restore_flag;
  for (auto& p : params) {
    restore_flag.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.zero_grad();
  }

  const double base = evaluate(fn);
  if (evaluate(fn) != base) {
    throw ContractError("finite_difference_check: fn is not deterministic (fix the dropout seed?)");
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    {
      TapeScope scope(tape);
      const Tensor loss = fn();
      tape.backward(loss);
    }
    for (const auto& p : params) {
      const auto g = p.grad();
      analytic.emplace_back(g.begin(), g.end());
    }
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double plus = evaluate(fn);
      data[i] = saved - eps;
      const double minus = evaluate(fn);
      data[i] = saved;

      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      ++result.elements_checked;
      if (err > result.max_rel_error || result.elements_checked == 1) {
        result.max_rel_error = err;
        result.worst_param = k;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }

  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k].zero_grad();
    params[k].set_requires_grad(restore_flag[k]);
  }
  return result;
}

}  // namespace wavestiff::ad
