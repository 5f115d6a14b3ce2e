#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wavestiff/tensor.hpp"

namespace wavestiff::wavelet {

enum class Boundary {
  kZero,      // trailing zeros, K - 2 of them per level for even lengths
  kCircular,  // periodic extension
};

Boundary boundary_from_string(std::string_view name);
std::string to_string(Boundary boundary);

// Analysis filter pair; both filters are applied as correlations.
struct FilterPair {
  std::string name;
  std::vector<double> low;
  std::vector<double> high;

  std::size_t length() const { return low.size(); }
};

// f_l = [1, 1], f_h = [1, -1]; scaled by 1/sqrt(2) when normalized.
FilterPair haar_filters(bool normalized);

// 8-tap Daubechies pair (four vanishing moments); f_h is the alternating-sign
// reverse of f_l.
FilterPair db4_filters();

// "haar" (normalized) or "db4".
FilterPair filters_by_name(std::string_view name);

// Throws ConfigError unless both filters have the same even length >= 2.
void validate(const FilterPair& filters);

// Max deviation from sum f_l^2 = 1, sum f_h^2 = 1, sum f_l f_h = 0.
double orthonormality_defect(const FilterPair& filters);

struct DwtOutput {
  std::vector<double> low;
  std::vector<double> high;
};

// One analysis step: low[n] = sum_j f_l[j] x[2n + j], same for high.
// Zero boundary extends x with trailing zeros (K - 2, plus one when T is
// odd) so the output has ceil(T / 2) samples; circular wraps indices mod T.
DwtOutput dwt_step(std::span<const double> x, const FilterPair& filters, Boundary boundary);

// Full packet tree of depth `levels`. Row 2n / 2n + 1 of level l are the
// low / high children of row n of level l - 1. Returns [2^L, T / 2^L].
ad::Tensor wpt_decompose(std::span<const double> x, const FilterPair& filters, std::size_t levels,
                         Boundary boundary);

// Inverse of the circular packet cascade (transposed analysis operator).
// Exact only for orthonormal filters.
std::vector<double> wpt_reconstruct(const ad::Tensor& subbands, const FilterPair& filters);

// Learnable wavelet packet stem: one filter pair per tree node, initialized to
// `init` and optionally trained.
class LwptStem {
 public:
  LwptStem(std::size_t levels, FilterPair init, bool learnable, Boundary boundary = Boundary::kZero);

  std::size_t levels() const { return filters_.size(); }
  std::size_t filter_length() const { return init_.length(); }
  const FilterPair& initial_filters() const { return init_; }
  bool learnable() const { return learnable_; }
  Boundary boundary() const { return boundary_; }
  std::size_t output_channels() const { return std::size_t{1} << levels(); }

  // Filter tensor [2, 1, K] of `node` at 1-based `level`; row 0 low, row 1 high.
  const ad::Tensor& filter(std::size_t level, std::size_t node) const;
  ad::Tensor& filter(std::size_t level, std::size_t node);

  // ("stem.l<level>.n<node>", tensor) for every node, level-major.
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;

  // x: [T], [1, T] or [B, 1, T] -> [2^L, T / 2^L] or [B, 2^L, T / 2^L].
  ad::Tensor forward(const ad::Tensor& x) const;

  // Number of leading output steps whose zero-boundary receptive field
  // [2^L n, 2^L n + (2^L - 1)(K - 1)] lies inside the first `valid_len` samples.
  std::size_t valid_steps(std::size_t valid_len) const;

 private:
  FilterPair init_;
  bool learnable_;
  Boundary boundary_;
  std::vector<std::vector<ad::Tensor>> filters_;
};

inline ad::Tensor lwpt_forward(const ad::Tensor& x, const LwptStem& stem) { return stem.forward(x); }

struct FilterCoefficient {
  std::size_t level;  // 1-based
  std::size_t node;
  bool high;
  std::size_t tap;
  double value;
};

// Every stem coefficient with its tree position, level-major.
std::vector<FilterCoefficient> export_filter_distribution(const LwptStem& stem);

// CSV with header level,node,branch,tap_index,value.
void write_filter_csv(std::ostream& out, const std::vector<FilterCoefficient>& rows);

}  // namespace wavestiff::wavelet
