#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include <torch/torch.h>

#include "swinvrnn/field_store.hpp"

namespace swinvrnn {

struct SequenceSample {
  torch::Tensor history;  // [n_in, t_hist, H, W], normalized
  torch::Tensor target;   // [n_out, t_pred, H, W], normalized
  TimePoint init_time;    // time of the last history frame
  std::int64_t first_index = 0;  // store index of the first history frame
};

// Every history+target window lying inside the store (optionally restricted to
// a time range), addressable by window index. Windows too long for the store
// give an empty set.
class SequenceWindows {
 public:
  SequenceWindows(FieldStore store, NormStats stats, std::int64_t t_hist, std::int64_t t_pred,
                  std::int64_t stride = 1, std::optional<TimeRange> range = std::nullopt);

  std::int64_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::int64_t t_hist() const { return t_hist_; }
  std::int64_t t_pred() const { return t_pred_; }
  std::int64_t first_index(std::int64_t window) const { return begin_ + window * stride_; }

  SequenceSample operator[](std::int64_t window) const;
  // Stacks windows into history [B, n_in, t_hist, H, W] and target [B, n_out, t_pred, H, W].
  std::pair<torch::Tensor, torch::Tensor> batch(std::span<const std::int64_t> windows) const;

  // Disjoint contiguous index range [lo, hi) for shard `shard` of `n_shards`.
  std::pair<std::int64_t, std::int64_t> shard(std::int64_t shard, std::int64_t n_shards) const;

  const FieldStore& store() const { return store_; }
  const NormStats& stats() const { return stats_; }

 private:
  FieldStore store_;
  NormStats stats_;
  std::int64_t t_hist_;
  std::int64_t t_pred_;
  std::int64_t stride_;
  std::int64_t begin_ = 0;
  std::int64_t count_ = 0;
  std::vector<std::size_t> in_channels_;
  std::vector<std::size_t> out_channels_;
};

inline SequenceWindows make_sequences(FieldStore store, NormStats stats, std::int64_t t_hist, std::int64_t t_pred,
                                      std::int64_t stride = 1, std::optional<TimeRange> range = std::nullopt) {
  return SequenceWindows(std::move(store), std::move(stats), t_hist, t_pred, stride, range);
}

}  // namespace swinvrnn
