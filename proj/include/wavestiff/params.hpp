#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "wavestiff/tensor.hpp"

namespace wavestiff {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

// Ordered, named collection of model tensors. Entries share storage with the
// model they came from unless produced by snapshot().
class ModelParams {
 public:
  std::uint32_t version = kCheckpointVersion;

  void add(std::string name, ad::Tensor tensor);
  const ad::Tensor* find(std::string_view name) const;
  const ad::Tensor& at(std::string_view name) const;
  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  ModelParams snapshot() const;
  // Copies values by name into this collection's tensors. Every entry here
  // must exist in `source` with an identical shape.
  void assign_from(const ModelParams& source);

 private:
  std::vector<NamedTensor> entries_;
};

// Binary layout, little-endian: "WIBL", u32 version, u32 count, then per
// tensor u16 name length, UTF-8 name, u8 rank, u32 dims, f64 values.
void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in, const std::string& source = "<stream>");

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace wavestiff
