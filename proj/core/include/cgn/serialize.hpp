#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cgn/tensor.hpp"

namespace cgn {

/// Named-tensor archive, the on-disk form of checkpoints and saved
/// feature maps. Binary layout: magic "CGNT1\n", entry count, then per
/// entry: name length + bytes, rank, dims (int32 LE), raw doubles.
using TensorArchive = std::vector<std::pair<std::string, Tensor>>;

void write_tensor_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_tensor_archive(const std::filesystem::path& path);

/// Lookup by exact name; throws when missing.
const Tensor& archive_get(const TensorArchive& archive, const std::string& name);
bool archive_has(const TensorArchive& archive, const std::string& name);

}  // namespace cgn
