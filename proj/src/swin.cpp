#include "swinvrnn/swin.hpp"

#include <cmath>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

namespace F = torch::nn::functional;
using torch::indexing::None;
using torch::indexing::Slice;

void SwinBlockConfig::validate() const {
  if (dim < 1 || n_heads < 1 || dim % n_heads != 0) {
    throw ConfigError("Swin block dim " + std::to_string(dim) + " is not divisible by " + std::to_string(n_heads) +
                      " heads");
  }
  if (window < 1) throw ConfigError("window must be positive");
  if (shift < 0 || shift >= window) throw ConfigError("shift must satisfy 0 <= shift < window");
  if (height < 1 || width < 1) throw GeometryError("Swin block resolution must be positive");
  if (mlp_ratio <= 0.0) throw ConfigError("mlp_ratio must be positive");
}

std::int64_t default_heads(std::int64_t dim) { return std::max<std::int64_t>(1, dim / 32); }

WindowGeometry resolve_window(std::int64_t height, std::int64_t width, std::int64_t window, std::int64_t shift) {
  const auto smallest = std::min(height, width);
  if (window > smallest) return {smallest, 0};
  return {window, shift};
}

torch::Tensor apply_linear(const torch::nn::LinearImpl& layer, const torch::Tensor& x) {
  const auto& w = layer.weight;
  if (x.dim() < 1 || x.size(-1) != w.size(1)) {
    throw ShapeError("linear layer expects " + std::to_string(w.size(1)) + " input features");
  }
  // Training batches are not split; the batched backward of the per-sample
  // form costs more than half a step.
  if (torch::GradMode::is_enabled()) return torch::nn::functional::linear(x, w, layer.bias);
  const auto b = x.dim() >= 2 ? x.size(0) : 1;
  auto x3 = x.reshape({b, -1, w.size(1)});
  auto wt = w.t().unsqueeze(0).expand({b, w.size(1), w.size(0)});
  auto y = layer.bias.defined() ? torch::baddbmm(layer.bias.view({1, 1, -1}), x3, wt) : torch::bmm(x3, wt);
  auto shape = x.sizes().vec();
  shape.back() = w.size(0);
  return y.view(shape);
}

void init_linear(torch::nn::Linear& layer) {
  torch::NoGradGuard guard;
  layer->weight.normal_(0.0, 0.02).clamp_(-0.04, 0.04);
  if (layer->bias.defined()) layer->bias.zero_();
}

namespace {

void check_tiling(std::int64_t h, std::int64_t w, std::int64_t window) {
  if (window < 1 || window > std::min(h, w)) {
    throw GeometryError("window " + std::to_string(window) + " does not fit a " + std::to_string(h) + "x" +
                        std::to_string(w) + " map");
  }
  if (h % window != 0 || w % window != 0) {
    throw GeometryError("map " + std::to_string(h) + "x" + std::to_string(w) + " is not a multiple of window " +
                        std::to_string(window));
  }
}

// [B, H, W, C] -> [B * nW, window * window, C]
torch::Tensor tile(const torch::Tensor& x, std::int64_t window) {
  const auto b = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
  return x.view({b, h / window, window, w / window, window, c})
      .permute({0, 1, 3, 2, 4, 5})
      .contiguous()
      .view({-1, window * window, c});
}

torch::Tensor untile(const torch::Tensor& windows, std::int64_t window, std::int64_t h, std::int64_t w) {
  const auto c = windows.size(-1);
  const auto b = windows.size(0) / ((h / window) * (w / window));
  return windows.view({b, h / window, w / window, window, window, c})
      .permute({0, 1, 3, 2, 4, 5})
      .contiguous()
      .view({b, h, w, c});
}

}  // namespace

torch::Tensor shifted_window_mask(std::int64_t height, std::int64_t width, std::int64_t window, std::int64_t shift,
                                  bool longitude_cyclic, const torch::TensorOptions& options) {
  if (shift == 0) return {};
  check_tiling(height, width, window);
  // Label regions that are contiguous on the sphere after the roll; pairs of
  // different labels inside one window get masked.
  auto region = torch::zeros({1, height, width, 1}, torch::kFloat64);
  const std::vector<std::pair<std::int64_t, std::int64_t>> bands{
      {0, height - window}, {height - window, height - shift}, {height - shift, height}};
  const std::vector<std::pair<std::int64_t, std::int64_t>> cols =
      longitude_cyclic ? std::vector<std::pair<std::int64_t, std::int64_t>>{{0, width}}
                       : std::vector<std::pair<std::int64_t, std::int64_t>>{
                             {0, width - window}, {width - window, width - shift}, {width - shift, width}};
  double label = 0.0;
  for (const auto& [h0, h1] : bands) {
    for (const auto& [w0, w1] : cols) {
      region.index_put_({Slice(), Slice(h0, h1), Slice(w0, w1), Slice()}, label);
      label += 1.0;
    }
  }
  auto ids = tile(region, window).squeeze(-1);  // [nW, N]
  auto diff = ids.unsqueeze(1) - ids.unsqueeze(2);
  auto mask = torch::zeros_like(diff).masked_fill(diff != 0, kMaskedLogit);
  if (!(mask != 0).any().item<bool>()) return {};
  return options.has_dtype() ? mask.to(options.dtype()) : mask.to(torch::kFloat32);
}

WindowPartition window_partition(const torch::Tensor& x, std::int64_t window, std::int64_t shift,
                                 bool longitude_cyclic) {
  if (x.dim() != 4) throw ShapeError("window_partition expects [B, H, W, C]");
  const auto h = x.size(1), w = x.size(2);
  check_tiling(h, w, window);
  if (shift < 0 || shift >= window) throw ConfigError("shift must satisfy 0 <= shift < window");
  WindowPartition out;
  auto shifted = shift > 0 ? torch::roll(x, {-shift, -shift}, {1, 2}) : x;
  out.windows = tile(shifted, window);
  out.n_windows = (h / window) * (w / window);
  out.mask = shifted_window_mask(h, w, window, shift, longitude_cyclic, x.options());
  return out;
}

torch::Tensor window_reverse(const torch::Tensor& windows, std::int64_t window, std::int64_t shift,
                             std::int64_t height, std::int64_t width) {
  auto x = untile(windows, window, height, width);
  return shift > 0 ? torch::roll(x, {shift, shift}, {1, 2}) : x;
}

WindowAttentionImpl::WindowAttentionImpl(std::int64_t dim, std::int64_t n_heads, std::int64_t window)
    : dim_(dim), n_heads_(n_heads), window_(window) {
  if (dim % n_heads != 0) throw ConfigError("attention dim must be divisible by the head count");
  qkv = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
  proj = register_module("proj", torch::nn::Linear(dim, dim));
  init_linear(qkv);
  init_linear(proj);
  const auto side = 2 * window - 1;
  relative_position_bias_table =
      register_parameter("relative_position_bias_table", torch::zeros({side * side, n_heads}));
  {
    torch::NoGradGuard guard;
    relative_position_bias_table.normal_(0.0, 0.02).clamp_(-0.04, 0.04);
  }
  auto coords = torch::stack(torch::meshgrid({torch::arange(window), torch::arange(window)}, "ij")).flatten(1);
  auto rel = (coords.unsqueeze(2) - coords.unsqueeze(1)).permute({1, 2, 0}) + (window - 1);  // [N, N, 2]
  // Kept out of the buffer list so Module::to(dtype) leaves it integral.
  relative_position_index_ = (rel.select(2, 0) * side + rel.select(2, 1)).to(torch::kLong);
}

torch::Tensor WindowAttentionImpl::forward(const torch::Tensor& windows, const torch::Tensor& mask,
                                           torch::Tensor* weights) {
  const auto bw = windows.size(0), n = windows.size(1), c = windows.size(2);
  if (c != dim_) throw ShapeError("window attention expects " + std::to_string(dim_) + " channels");
  if (n != window_ * window_) throw ShapeError("window attention expects windows of " + std::to_string(window_ * window_) + " tokens");
  const auto head_dim = c / n_heads_;
  auto qkv_out = apply_linear(*qkv, windows).view({bw, n, 3, n_heads_, head_dim}).permute({2, 0, 3, 1, 4});
  auto q = qkv_out[0] * (1.0 / std::sqrt(static_cast<double>(head_dim)));
  auto k = qkv_out[1];
  auto v = qkv_out[2];
  auto logits = torch::matmul(q, k.transpose(-2, -1));  // [bw, heads, n, n]
  auto bias = relative_position_bias_table.index({relative_position_index_.view(-1).to(windows.device())})
                  .view({n, n, n_heads_})
                  .permute({2, 0, 1});
  logits = logits + bias.unsqueeze(0);
  if (mask.defined()) {
    const auto nw = mask.size(0);
    logits = logits.view({bw / nw, nw, n_heads_, n, n}) + mask.to(logits.dtype()).unsqueeze(1).unsqueeze(0);
    logits = logits.view({bw, n_heads_, n, n});
  }
  auto attn = torch::softmax(logits, -1);
  if (weights) *weights = attn;
  auto out = torch::matmul(attn, v).transpose(1, 2).reshape({bw, n, c});
  return apply_linear(*proj, out);
}

SwinBlockImpl::SwinBlockImpl(const SwinBlockConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  geom_ = resolve_window(cfg.height, cfg.width, cfg.window, cfg.shift);
  padded_h_ = (cfg.height + geom_.window - 1) / geom_.window * geom_.window;
  padded_w_ = (cfg.width + geom_.window - 1) / geom_.window * geom_.window;
  if (cfg.longitude_cyclic && padded_w_ != cfg.width) {
    throw GeometryError("cyclic longitude needs width " + std::to_string(cfg.width) + " to be a multiple of window " +
                        std::to_string(geom_.window));
  }
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.dim})));
  attn = register_module("attn", WindowAttention(cfg.dim, cfg.n_heads, geom_.window));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.dim})));
  const auto hidden = static_cast<std::int64_t>(std::llround(static_cast<double>(cfg.dim) * cfg.mlp_ratio));
  fc1 = register_module("fc1", torch::nn::Linear(cfg.dim, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, cfg.dim));
  init_linear(fc1);
  init_linear(fc2);
  auto mask = shifted_window_mask(padded_h_, padded_w_, geom_.window, geom_.shift, cfg.longitude_cyclic);
  if (mask.defined()) mask_ = register_buffer("attn_mask", mask);
}

torch::Tensor SwinBlockImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != cfg_.height || x.size(2) != cfg_.width || x.size(3) != cfg_.dim) {
    throw ShapeError("Swin block expects [B, " + std::to_string(cfg_.height) + ", " + std::to_string(cfg_.width) +
                     ", " + std::to_string(cfg_.dim) + "]");
  }
  auto y = norm1->forward(x);
  if (padded_h_ != cfg_.height || padded_w_ != cfg_.width) {
    y = F::pad(y, F::PadFuncOptions({0, 0, 0, padded_w_ - cfg_.width, 0, padded_h_ - cfg_.height}));
  }
  auto part = window_partition(y, geom_.window, geom_.shift, cfg_.longitude_cyclic);
  auto attended = attn->forward(part.windows, mask_);
  y = window_reverse(attended, geom_.window, geom_.shift, padded_h_, padded_w_);
  if (padded_h_ != cfg_.height || padded_w_ != cfg_.width) {
    y = y.index({Slice(), Slice(0, cfg_.height), Slice(0, cfg_.width), Slice()});
  }
  auto h = x + y;
  return h + apply_linear(*fc2, torch::gelu(apply_linear(*fc1, norm2->forward(h))));
}

void SwinBlockImpl::zero_output_projections() {
  torch::NoGradGuard guard;
  attn->proj->weight.zero_();
  attn->proj->bias.zero_();
  fc2->weight.zero_();
  fc2->bias.zero_();
}

PatchMergingImpl::PatchMergingImpl(std::int64_t in_dim, std::int64_t out_dim) {
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({4 * in_dim})));
  reduction = register_module("reduction", torch::nn::Linear(torch::nn::LinearOptions(4 * in_dim, out_dim).bias(false)));
  init_linear(reduction);
}

torch::Tensor PatchMergingImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4) throw ShapeError("patch merging expects [B, H, W, C]");
  if (x.size(1) % 2 != 0 || x.size(2) % 2 != 0) {
    throw GeometryError("patch merging needs even spatial dims, got " + std::to_string(x.size(1)) + "x" +
                        std::to_string(x.size(2)));
  }
  auto x0 = x.index({Slice(), Slice(0, None, 2), Slice(0, None, 2), Slice()});
  auto x1 = x.index({Slice(), Slice(1, None, 2), Slice(0, None, 2), Slice()});
  auto x2 = x.index({Slice(), Slice(0, None, 2), Slice(1, None, 2), Slice()});
  auto x3 = x.index({Slice(), Slice(1, None, 2), Slice(1, None, 2), Slice()});
  return apply_linear(*reduction, norm->forward(torch::cat({x0, x1, x2, x3}, -1)));
}

}  // namespace swinvrnn
