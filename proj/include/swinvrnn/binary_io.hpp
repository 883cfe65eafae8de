#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

namespace swinvrnn {

// Raw little-endian float32 blobs, the on-disk convention for caches,
// checkpoints and forecast artifacts.
void write_f32_le(const std::filesystem::path& path, std::span<const float> values);
std::vector<float> read_f32_le(const std::filesystem::path& path);

// Read-only memory map of a little-endian float32 blob.
class MappedFloats {
 public:
  static std::shared_ptr<MappedFloats> open(const std::filesystem::path& path);
  ~MappedFloats();
  MappedFloats(const MappedFloats&) = delete;
  MappedFloats& operator=(const MappedFloats&) = delete;

  std::span<const float> values() const { return {data_, size_}; }

 private:
  MappedFloats() = default;
  void* base_ = nullptr;
  std::size_t bytes_ = 0;
  const float* data_ = nullptr;
  std::size_t size_ = 0;
  std::vector<float> fallback_;  // byte-swapped copy on big-endian hosts
};

}  // namespace swinvrnn
