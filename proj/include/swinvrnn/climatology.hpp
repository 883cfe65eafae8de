#pragma once

#include <array>

#include <torch/torch.h>

#include "swinvrnn/field_store.hpp"

namespace swinvrnn {

inline constexpr int kClimatologyWeeks = 52;

struct WeeklyClimatology {
  torch::Tensor fields;                       // [52, n_channels, H, W] float32
  std::array<std::int64_t, kClimatologyWeeks> counts{};

  // Climatological field stack for the calendar week of `t`.
  torch::Tensor for_time(TimePoint t) const { return fields[climatology_week_index(t)]; }
};

// Mean field per ISO calendar week over `range` (week 53 folds into 52).
// Physical units unless `stats` is given, in which case the result is normalized.
WeeklyClimatology weekly_climatology(const FieldStore& store, const TimeRange& range,
                                     const NormStats* stats = nullptr);

}  // namespace swinvrnn
