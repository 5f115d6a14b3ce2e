#include "wavestiff/wavelet.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "wavestiff/error.hpp"
#include "wavestiff/ops.hpp"

namespace wavestiff::wavelet {

Boundary boundary_from_string(std::string_view name) {
  if (name == "zero") return Boundary::kZero;
  if (name == "circular") return Boundary::kCircular;
  throw ConfigError("unknown boundary '" + std::string(name) + "' (expected zero|circular)");
}

std::string to_string(Boundary boundary) { return boundary == Boundary::kZero ? "zero" : "circular"; }

FilterPair haar_filters(bool normalized) {
  const double a = normalized ? 1.0 / std::sqrt(2.0) : 1.0;
  return {normalized ? "haar" : "haar-unnormalized", {a, a}, {a, -a}};
}

FilterPair db4_filters() {
  FilterPair f;
  f.name = "db4";
  f.low = {0.2303778133088965008632911830440708500016,  0.7148465705529156470899219552739926037076,
           0.6308807679298589078817163383006152202347,  -0.0279837694168598542665400231346658880766,
           -0.1870348117190930840795706727890814195845, 0.0308413818355607636060010008937751520050,
           0.0328830116668851997724388607952218219127,  -0.0105974017850690321932524010240314127137};
  const std::size_t k = f.low.size();
  f.high.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double sign = (j % 2 == 0) ? 1.0 : -1.0;
    f.high[j] = sign * f.low[k - 1 - j];
  }
  return f;
}

FilterPair filters_by_name(std::string_view name) {
  if (name == "haar") return haar_filters(true);
  if (name == "db4") return db4_filters();
  throw ConfigError("unknown wavelet '" + std::string(name) + "' (expected haar|db4)");
}

void validate(const FilterPair& filters) {
  const std::size_t k = filters.low.size();
  if (k < 2 || k % 2 != 0 || filters.high.size() != k) {
    throw ConfigError("filter pair '" + filters.name + "' must have equal even lengths >= 2");
  }
}

double orthonormality_defect(const FilterPair& filters) {
  double ll = 0.0, hh = 0.0, lh = 0.0;
  for (std::size_t j = 0; j < filters.length(); ++j) {
    ll += filters.low[j] * filters.low[j];
    hh += filters.high[j] * filters.high[j];
    lh += filters.low[j] * filters.high[j];
  }
  return std::max({std::abs(ll - 1.0), std::abs(hh - 1.0), std::abs(lh)});
}

DwtOutput dwt_step(std::span<const double> x, const FilterPair& filters, Boundary boundary) {
  validate(filters);
  const std::size_t t = x.size();
  const std::size_t k = filters.length();
  if (t == 0) throw InputError("dwt_step: empty signal");

  DwtOutput out;
  if (boundary == Boundary::kCircular) {
    if (t % 2 != 0) throw InputError("dwt_step: circular boundary needs an even length, got " + std::to_string(t));
    const std::size_t half = t / 2;
    out.low.resize(half);
    out.high.resize(half);
    for (std::size_t n = 0; n < half; ++n) {
      double lo = 0.0, hi = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double v = x[(2 * n + j) % t];
        lo += filters.low[j] * v;
        hi += filters.high[j] * v;
      }
      out.low[n] = lo;
      out.high[n] = hi;
    }
    return out;
  }

  if (t < k) {
    throw InputError("dwt_step: zero boundary needs at least " + std::to_string(k) + " samples, got " +
                     std::to_string(t));
  }
  const std::size_t half = (t + 1) / 2;
  out.low.resize(half);
  out.high.resize(half);
  for (std::size_t n = 0; n < half; ++n) {
    double lo = 0.0, hi = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t idx = 2 * n + j;
      const double v = idx < t ? x[idx] : 0.0;
      lo += filters.low[j] * v;
      hi += filters.high[j] * v;
    }
    out.low[n] = lo;
    out.high[n] = hi;
  }
  return out;
}

ad::Tensor wpt_decompose(std::span<const double> x, const FilterPair& filters, std::size_t levels,
                         Boundary boundary) {
  if (levels == 0) throw ConfigError("wpt_decompose: levels must be >= 1");
  const std::size_t block = std::size_t{1} << levels;
  if (x.empty() || x.size() % block != 0) {
    const std::size_t padded = (x.size() + block - 1) / block * block;
    throw InputError("wpt_decompose: length " + std::to_string(x.size()) + " is not divisible by 2^" +
                     std::to_string(levels) + "; pad with " + std::to_string(padded - x.size()) +
                     " trailing zeros");
  }
  std::vector<std::vector<double>> nodes{std::vector<double>(x.begin(), x.end())};
  for (std::size_t level = 0; level < levels; ++level) {
    std::vector<std::vector<double>> next;
    next.reserve(nodes.size() * 2);
    for (const auto& node : nodes) {
      auto step = dwt_step(node, filters, boundary);
      next.push_back(std::move(step.low));
      next.push_back(std::move(step.high));
    }
    nodes = std::move(next);
  }
  const std::size_t len = nodes.front().size();
  std::vector<double> flat;
  flat.reserve(nodes.size() * len);
  for (const auto& node : nodes) flat.insert(flat.end(), node.begin(), node.end());
  return ad::Tensor::from({nodes.size(), len}, std::move(flat));
}

std::vector<double> wpt_reconstruct(const ad::Tensor& subbands, const FilterPair& filters) {
  validate(filters);
  if (subbands.rank() != 2) throw DimensionError("wpt_reconstruct: expected [2^L, T / 2^L] subbands");
  std::size_t count = subbands.dim(0);
  if (count == 0 || (count & (count - 1)) != 0) {
    throw DimensionError("wpt_reconstruct: subband count " + std::to_string(count) + " is not a power of two");
  }
  const std::size_t len = subbands.dim(1);
  const std::size_t k = filters.length();
  std::vector<std::vector<double>> nodes(count);
  for (std::size_t i = 0; i < count; ++i) {
    nodes[i].assign(subbands.data().begin() + static_cast<std::ptrdiff_t>(i * len),
                    subbands.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
  }
  while (nodes.size() > 1) {
    std::vector<std::vector<double>> parents(nodes.size() / 2);
    for (std::size_t p = 0; p < parents.size(); ++p) {
      const auto& lo = nodes[2 * p];
      const auto& hi = nodes[2 * p + 1];
      const std::size_t t = lo.size() * 2;
      std::vector<double> x(t, 0.0);
      for (std::size_t n = 0; n < lo.size(); ++n) {
        for (std::size_t j = 0; j < k; ++j) {
          x[(2 * n + j) % t] += filters.low[j] * lo[n] + filters.high[j] * hi[n];
        }
      }
      parents[p] = std::move(x);
    }
    nodes = std::move(parents);
  }
  return nodes.front();
}

// ---------------------------------------------------------------------------

LwptStem::LwptStem(std::size_t levels, FilterPair init, bool learnable, Boundary boundary)
    : init_(std::move(init)), learnable_(learnable), boundary_(boundary) {
  validate(init_);
  if (levels == 0) throw ConfigError("LwptStem: levels must be >= 1");
  const std::size_t k = init_.length();
  std::vector<double> pair(init_.low);
  pair.insert(pair.end(), init_.high.begin(), init_.high.end());
  for (std::size_t level = 1; level <= levels; ++level) {
    std::vector<ad::Tensor> nodes;
    for (std::size_t n = 0; n < (std::size_t{1} << (level - 1)); ++n) {
      nodes.push_back(ad::Tensor::from({2, 1, k}, pair, learnable));
    }
    filters_.push_back(std::move(nodes));
  }
}

const ad::Tensor& LwptStem::filter(std::size_t level, std::size_t node) const {
  if (level < 1 || level > filters_.size() || node >= filters_[level - 1].size()) {
    throw ConfigError("LwptStem: no filter at level " + std::to_string(level) + ", node " + std::to_string(node));
  }
  return filters_[level - 1][node];
}

ad::Tensor& LwptStem::filter(std::size_t level, std::size_t node) {
  return const_cast<ad::Tensor&>(std::as_const(*this).filter(level, node));
}

std::vector<std::pair<std::string, ad::Tensor>> LwptStem::named_parameters() const {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  for (std::size_t l = 0; l < filters_.size(); ++l) {
    for (std::size_t n = 0; n < filters_[l].size(); ++n) {
      out.emplace_back("stem.l" + std::to_string(l + 1) + ".n" + std::to_string(n), filters_[l][n]);
    }
  }
  return out;
}

ad::Tensor LwptStem::forward(const ad::Tensor& x) const {
  ad::Tensor h;
  bool squeeze = false;
  if (x.rank() == 1) {
    h = ad::reshape(x, {1, 1, x.dim(0)});
    squeeze = true;
  } else if (x.rank() == 2 && x.dim(0) == 1) {
    h = ad::reshape(x, {1, 1, x.dim(1)});
    squeeze = true;
  } else if (x.rank() == 3 && x.dim(1) == 1) {
    h = x;
  } else {
    throw DimensionError("lwpt_forward: expected [T], [1, T] or [B, 1, T], got " + ad::shape_str(x.shape()));
  }
  const std::size_t t = h.dim(2);
  const std::size_t block = output_channels();
  if (t == 0 || t % block != 0) {
    throw InputError("lwpt_forward: length " + std::to_string(t) + " is not divisible by 2^" +
                     std::to_string(levels()));
  }
  const std::size_t k = filter_length();
  for (std::size_t l = 0; l < filters_.size(); ++l) {
    const std::size_t channels = filters_[l].size();
    const ad::Tensor weight = channels == 1 ? filters_[l][0] : ad::concat(filters_[l], 0);
    if (boundary_ == Boundary::kCircular) {
      const std::size_t len = h.dim(2);
      if (k > 2) {
        std::vector<std::size_t> wrap(k - 2);
        for (std::size_t j = 0; j < wrap.size(); ++j) wrap[j] = j % len;
        h = ad::concat({h, ad::take(h, 2, wrap)}, 2);
      }
      h = ad::conv1d(h, weight, ad::Tensor(), 2, 0, channels);
    } else {
      if (h.dim(2) < k) {
        throw InputError("lwpt_forward: level " + std::to_string(l + 1) + " input of length " +
                         std::to_string(h.dim(2)) + " is shorter than the filter");
      }
      h = ad::conv1d(h, weight, ad::Tensor(), 2, k - 2, channels);
    }
  }
  if (squeeze) h = ad::reshape(h, {h.dim(1), h.dim(2)});
  return h;
}

std::size_t LwptStem::valid_steps(std::size_t valid_len) const {
  const std::size_t block = output_channels();
  const std::size_t reach = (block - 1) * (filter_length() - 1);
  if (valid_len < reach + 1) return 0;
  return (valid_len - 1 - reach) / block + 1;
}

std::vector<FilterCoefficient> export_filter_distribution(const LwptStem& stem) {
  std::vector<FilterCoefficient> rows;
  const std::size_t k = stem.filter_length();
  for (std::size_t level = 1; level <= stem.levels(); ++level) {
    for (std::size_t node = 0; node < (std::size_t{1} << (level - 1)); ++node) {
      const auto data = stem.filter(level, node).data();
      for (std::size_t branch = 0; branch < 2; ++branch) {
        for (std::size_t tap = 0; tap < k; ++tap) {
          rows.push_back({level, node, branch == 1, tap, data[branch * k + tap]});
        }
      }
    }
  }
  return rows;
}

void write_filter_csv(std::ostream& out, const std::vector<FilterCoefficient>& rows) {
  out << "level,node,branch,tap_index,value\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : rows) {
    out << r.level << ',' << r.node << ',' << (r.high ? "high" : "low") << ',' << r.tap << ',' << r.value << '\n';
  }
}

}  // namespace wavestiff::wavelet
