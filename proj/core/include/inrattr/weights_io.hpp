#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "inrattr/tensor.hpp"

namespace inrattr {

struct NamedTensor {
  std::string name;
  TensorPtr value;
};

/// Binary tensor container. Layout, all integers little-endian:
///   magic "INRW" | version u32 = 1 | tensor count u32 |
///   per tensor: name length u16, UTF-8 name, rank u8, extents u32 each,
///   float32 payload.
void save_tensors(const std::filesystem::path& path,
                  const std::vector<NamedTensor>& tensors);

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

/// Convenience for single-tensor sidecar files.
void save_single_tensor(const std::filesystem::path& path, const std::string& name,
                        const Tensor& t);
TensorPtr load_single_tensor(const std::filesystem::path& path, const std::string& name);

}  // namespace inrattr
