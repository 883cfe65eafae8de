#include "swinvrnn/climatology.hpp"

#include <vector>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

WeeklyClimatology weekly_climatology(const FieldStore& store, const TimeRange& range, const NormStats* stats) {
  const auto [t0, t1] = store.axis().span_of(range);
  if (t1 <= t0) throw PreconditionError("climatology range selects no time steps");
  const auto span = store.axis().at(t1 - 1) - store.axis().at(t0);
  if (span < std::chrono::days{364}) throw PreconditionError("climatology range must span at least one year");

  const auto n_ch = store.n_channels();
  const auto hw = store.cells();
  std::vector<double> acc(kClimatologyWeeks * n_ch * hw, 0.0);
  WeeklyClimatology clim;
  for (std::int64_t t = t0; t < t1; ++t) {
    const int week = climatology_week_index(store.axis().at(t));
    ++clim.counts[static_cast<std::size_t>(week)];
    double* dst = acc.data() + static_cast<std::size_t>(week) * n_ch * hw;
    for (std::size_t c = 0; c < n_ch; ++c) {
      const auto src = store.field(c, t);
      for (std::size_t i = 0; i < hw; ++i) dst[c * hw + i] += src[i];
    }
  }
  const auto h = static_cast<std::int64_t>(store.grid().n_lat());
  const auto w = static_cast<std::int64_t>(store.grid().n_lon());
  clim.fields = torch::empty({kClimatologyWeeks, static_cast<std::int64_t>(n_ch), h, w}, torch::kFloat32);
  float* out = clim.fields.data_ptr<float>();
  for (int wk = 0; wk < kClimatologyWeeks; ++wk) {
    const auto n = clim.counts[static_cast<std::size_t>(wk)];
    if (n == 0) throw PreconditionError("calendar week " + std::to_string(wk + 1) + " has no samples");
    for (std::size_t i = 0; i < n_ch * hw; ++i) {
      const auto k = static_cast<std::size_t>(wk) * n_ch * hw + i;
      out[k] = static_cast<float>(acc[k] / static_cast<double>(n));
    }
  }
  if (stats) clim.fields = stats->normalize(clim.fields, 1);
  return clim;
}

}  // namespace swinvrnn
