#include "swinvrnn/sequences.hpp"

#include <numeric>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

SequenceWindows::SequenceWindows(FieldStore store, NormStats stats, std::int64_t t_hist, std::int64_t t_pred,
                                 std::int64_t stride, std::optional<TimeRange> range)
    : store_(std::move(store)), stats_(std::move(stats)), t_hist_(t_hist), t_pred_(t_pred), stride_(stride) {
  if (t_hist < 1 || t_pred < 1) throw ConfigError("t_hist and t_pred must be at least 1");
  if (stride < 1) throw ConfigError("window stride must be at least 1");
  if (stats_.mean.size() != store_.n_channels()) {
    throw ShapeError("normalization statistics do not match the store's channel count");
  }
  std::int64_t lo = 0;
  std::int64_t hi = store_.n_times();
  if (range) std::tie(lo, hi) = store_.axis().span_of(*range);
  begin_ = lo;
  const std::int64_t len = t_hist + t_pred;
  count_ = hi - lo >= len ? (hi - lo - len) / stride + 1 : 0;
  in_channels_.resize(store_.catalog().n_in());
  std::iota(in_channels_.begin(), in_channels_.end(), std::size_t{0});
  out_channels_.resize(store_.catalog().n_out());
  std::iota(out_channels_.begin(), out_channels_.end(), std::size_t{0});
}

SequenceSample SequenceWindows::operator[](std::int64_t window) const {
  if (window < 0 || window >= count_) throw std::out_of_range("sequence window out of range");
  const auto first = first_index(window);
  SequenceSample s;
  s.history = stats_.normalize(store_.frames(in_channels_, first, t_hist_), 0);
  s.target = stats_.normalize(store_.frames(out_channels_, first + t_hist_, t_pred_), 0);
  s.init_time = store_.axis().at(first + t_hist_ - 1);
  s.first_index = first;
  return s;
}

std::pair<torch::Tensor, torch::Tensor> SequenceWindows::batch(std::span<const std::int64_t> windows) const {
  std::vector<torch::Tensor> hist;
  std::vector<torch::Tensor> tgt;
  for (auto w : windows) {
    auto s = (*this)[w];
    hist.push_back(std::move(s.history));
    tgt.push_back(std::move(s.target));
  }
  return {torch::stack(hist), torch::stack(tgt)};
}

std::pair<std::int64_t, std::int64_t> SequenceWindows::shard(std::int64_t shard, std::int64_t n_shards) const {
  if (n_shards < 1 || shard < 0 || shard >= n_shards) throw ConfigError("invalid shard index");
  const auto per = count_ / n_shards;
  const auto extra = count_ % n_shards;
  const auto lo = shard * per + std::min(shard, extra);
  return {lo, lo + per + (shard < extra ? 1 : 0)};
}

}  // namespace swinvrnn
