#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace swinvrnn {

// "AxBxC" shape text used in manifests.
std::string shape_text(torch::IntArrayRef sizes);
std::vector<std::int64_t> parse_shape(const std::string& text);

// Tensor as a little-endian float32 blob (converted from any dtype).
void write_tensor(const std::filesystem::path& path, const torch::Tensor& t);
// Throws IoError when the blob size disagrees with `shape`.
torch::Tensor read_tensor(const std::filesystem::path& path, const std::vector<std::int64_t>& shape);

}  // namespace swinvrnn
