#include "swinvrnn/field_store.hpp"

#include <cmath>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

FieldStore::FieldStore(VariableCatalog catalog, GridSpec grid, TimeAxis axis,
                       std::vector<std::span<const float>> channels, std::shared_ptr<const void> owner)
    : catalog_(std::move(catalog)),
      grid_(std::move(grid)),
      axis_(axis),
      channels_(std::move(channels)),
      owner_(std::move(owner)) {
  if (channels_.size() != catalog_.n_in()) {
    throw CatalogMismatch("store has " + std::to_string(channels_.size()) + " channels, catalog expects " +
                          std::to_string(catalog_.n_in()));
  }
  const auto hw = cells();
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    const auto expected = static_cast<std::size_t>(frame_count(c)) * hw;
    if (channels_[c].size() != expected) {
      throw GeometryError("channel '" + catalog_.channels()[c].name + "' holds " +
                          std::to_string(channels_[c].size()) + " values, expected " + std::to_string(expected));
    }
  }
}

FieldStore FieldStore::from_buffers(VariableCatalog catalog, GridSpec grid, TimeAxis axis,
                                    std::vector<std::vector<float>> channels) {
  auto owned = std::make_shared<std::vector<std::vector<float>>>(std::move(channels));
  std::vector<std::span<const float>> views;
  views.reserve(owned->size());
  for (const auto& buf : *owned) views.emplace_back(buf.data(), buf.size());
  return FieldStore(std::move(catalog), std::move(grid), axis, std::move(views), std::move(owned));
}

std::int64_t FieldStore::frame_count(std::size_t channel) const {
  return catalog_.channels().at(channel).constant ? 1 : axis_.count;
}

std::span<const float> FieldStore::field(std::size_t channel, std::int64_t t) const {
  if (t < 0 || t >= axis_.count) throw std::out_of_range("time index out of range");
  const auto hw = cells();
  const std::int64_t frame = catalog_.channels().at(channel).constant ? 0 : t;
  return channels_[channel].subspan(static_cast<std::size_t>(frame) * hw, hw);
}

torch::Tensor FieldStore::frames(std::span<const std::size_t> channels, std::int64_t first,
                                 std::int64_t count) const {
  const auto h = static_cast<std::int64_t>(grid_.n_lat());
  const auto w = static_cast<std::int64_t>(grid_.n_lon());
  auto out = torch::empty({static_cast<std::int64_t>(channels.size()), count, h, w}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  const auto hw = cells();
  for (std::size_t c = 0; c < channels.size(); ++c) {
    for (std::int64_t t = 0; t < count; ++t) {
      const auto src = field(channels[c], first + t);
      std::copy(src.begin(), src.end(), dst);
      dst += hw;
    }
  }
  return out;
}

namespace {

torch::Tensor channel_vector(const std::vector<double>& values, std::size_t first, std::int64_t n,
                             std::int64_t channel_dim, const torch::Tensor& like) {
  if (first + static_cast<std::size_t>(n) > values.size()) {
    throw ShapeError("normalization statistics cover fewer channels than the tensor");
  }
  auto v = torch::tensor(std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(first),
                                             values.begin() + static_cast<std::ptrdiff_t>(first) + n),
                         torch::kFloat64)
               .to(like.scalar_type());
  std::vector<std::int64_t> shape(static_cast<std::size_t>(like.dim()), 1);
  shape[static_cast<std::size_t>(channel_dim)] = n;
  return v.view(shape);
}

}  // namespace

torch::Tensor NormStats::normalize(const torch::Tensor& x, std::int64_t channel_dim, std::size_t first_channel) const {
  const auto dim = channel_dim < 0 ? channel_dim + x.dim() : channel_dim;
  const auto n = x.size(dim);
  return (x - channel_vector(mean, first_channel, n, dim, x)) / channel_vector(std, first_channel, n, dim, x);
}

torch::Tensor NormStats::denormalize(const torch::Tensor& x, std::int64_t channel_dim,
                                     std::size_t first_channel) const {
  const auto dim = channel_dim < 0 ? channel_dim + x.dim() : channel_dim;
  const auto n = x.size(dim);
  return x * channel_vector(std, first_channel, n, dim, x) + channel_vector(mean, first_channel, n, dim, x);
}

NormStats compute_norm_stats(const FieldStore& store, const TimeRange& train_range) {
  const auto [t0, t1] = store.axis().span_of(train_range);
  if (t1 <= t0) throw PreconditionError("training range selects no time steps");
  NormStats stats;
  const auto& channels = store.catalog().channels();
  for (std::size_t c = 0; c < store.n_channels(); ++c) {
    const bool constant = channels[c].constant;
    const std::int64_t last = constant ? t0 + 1 : t1;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::int64_t t = t0; t < last; ++t) {
      for (float v : store.field(c, t)) sum += v;
      n += store.cells();
    }
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::int64_t t = t0; t < last; ++t) {
      for (float v : store.field(c, t)) sq += (v - mean) * (v - mean);
    }
    double sd = std::sqrt(sq / static_cast<double>(n));
    if (constant) {
      sd = 1.0;
    } else if (!(sd > 0.0) || !std::isfinite(sd)) {
      throw DegenerateStatistics("channel '" + channels[c].name + "' has zero variance over the training range");
    }
    stats.mean.push_back(mean);
    stats.std.push_back(sd);
  }
  return stats;
}

}  // namespace swinvrnn
