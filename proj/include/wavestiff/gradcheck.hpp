#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wavestiff/tensor.hpp"

namespace wavestiff::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;  // index into the parameter list
  std::size_t worst_index = 0;  // flat element index within that parameter
  double analytic = 0.0;        // gradients at the worst element
  double numeric = 0.0;
  std::size_t elements_checked = 0;
};

// Compares tape gradients of the scalar `fn()` with central differences
// (f(p + eps) - f(p - eps)) / (2 eps) for every element of every parameter.
// The per-element error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Throws ContractError when fn is not deterministic.
GradCheckResult finite_difference_check(const std::function<Tensor()>& fn, std::vector<Tensor> params,
                                        double eps = 1e-3);

}  // namespace wavestiff::ad

namespace wavestiff::gradcheck {

struct Case {
  std::string name;
  std::function<ad::Tensor()> loss;
  std::vector<ad::Tensor> params;
};

struct CaseResult {
  std::string name;
  ad::GradCheckResult check;
  bool passed = false;
};

inline constexpr double kTolerance = 1e-4;

// Differentiable layers under test, each with seeded random inputs and a
// random weighting that reduces the output to a scalar.
std::vector<Case> standard_cases(std::uint64_t seed = 7);

// An elementwise square whose backward rule is off by a factor of 1.5.
Case corrupted_case(std::uint64_t seed = 7);

std::vector<CaseResult> run_cases(const std::vector<Case>& cases, double eps = 1e-3, double tolerance = kTolerance);

}  // namespace wavestiff::gradcheck
