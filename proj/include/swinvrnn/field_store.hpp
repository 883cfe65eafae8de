#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "swinvrnn/calendar.hpp"
#include "swinvrnn/grid.hpp"

namespace swinvrnn {

// Read-only gridded archive addressable by (channel, time). Each channel is a
// contiguous [frames, n_lat, n_lon] block of physical-unit floats; constant
// channels hold a single frame returned for every time index. Copies share
// the backing memory and the store is safe for concurrent readers.
class FieldStore {
 public:
  FieldStore() = default;
  FieldStore(VariableCatalog catalog, GridSpec grid, TimeAxis axis,
             std::vector<std::span<const float>> channels, std::shared_ptr<const void> owner);

  // Takes ownership of per-channel buffers.
  static FieldStore from_buffers(VariableCatalog catalog, GridSpec grid, TimeAxis axis,
                                 std::vector<std::vector<float>> channels);

  const VariableCatalog& catalog() const { return catalog_; }
  const GridSpec& grid() const { return grid_; }
  const TimeAxis& axis() const { return axis_; }
  std::int64_t n_times() const { return axis_.count; }
  std::size_t n_channels() const { return channels_.size(); }
  std::size_t cells() const { return grid_.n_lat() * grid_.n_lon(); }

  std::span<const float> field(std::size_t channel, std::int64_t t) const;
  std::int64_t frame_count(std::size_t channel) const;

  // [channels.size(), count, H, W] float tensor of consecutive frames.
  torch::Tensor frames(std::span<const std::size_t> channels, std::int64_t first, std::int64_t count) const;

 private:
  VariableCatalog catalog_;
  GridSpec grid_;
  TimeAxis axis_;
  std::vector<std::span<const float>> channels_;
  std::shared_ptr<const void> owner_;
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  // x: tensor with the channel axis at `channel_dim`, covering channels
  // [first_channel, first_channel + x.size(channel_dim)).
  torch::Tensor normalize(const torch::Tensor& x, std::int64_t channel_dim, std::size_t first_channel = 0) const;
  torch::Tensor denormalize(const torch::Tensor& x, std::int64_t channel_dim, std::size_t first_channel = 0) const;
};

// Per-channel mean/std over every cell and time in `train_range`. Constant
// channels keep their mean and get std 1.
NormStats compute_norm_stats(const FieldStore& store, const TimeRange& train_range);

}  // namespace swinvrnn
