#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace swinvrnn {

// Feature maps are channels-last: [B, H, W, C].

struct SwinBlockConfig {
  std::int64_t dim = 96;
  std::int64_t n_heads = 3;
  std::int64_t window = 8;
  std::int64_t shift = 0;
  double mlp_ratio = 4.0;
  bool longitude_cyclic = true;
  // Spatial extent the block runs at; fixes the effective window and mask.
  std::int64_t height = 8;
  std::int64_t width = 8;

  void validate() const;
};

// Standard head count: dim / 32, at least one.
std::int64_t default_heads(std::int64_t dim);

struct WindowGeometry {
  std::int64_t window;
  std::int64_t shift;
};

// Windows larger than the map are clamped to min(H, W) with shifting disabled.
WindowGeometry resolve_window(std::int64_t height, std::int64_t width, std::int64_t window, std::int64_t shift);

// Large negative logit used for pairs that the shifted layout made adjacent
// across a non-periodic boundary.
inline constexpr double kMaskedLogit = -1e9;

struct WindowPartition {
  torch::Tensor windows;  // [B * n_windows, window * window, C]
  torch::Tensor mask;     // [n_windows, N, N] additive logits, undefined when nothing is masked
  std::int64_t n_windows = 0;
};

// Shifts by `shift` cells (cyclic roll towards the origin) and tiles into
// non-overlapping windows. Longitude wraps without masking when
// `longitude_cyclic`; latitude wrap-around is always masked. H and W must
// be multiples of `window` (GeometryError otherwise).
WindowPartition window_partition(const torch::Tensor& x, std::int64_t window, std::int64_t shift,
                                 bool longitude_cyclic);
torch::Tensor window_reverse(const torch::Tensor& windows, std::int64_t window, std::int64_t shift,
                             std::int64_t height, std::int64_t width);
torch::Tensor shifted_window_mask(std::int64_t height, std::int64_t width, std::int64_t window, std::int64_t shift,
                                  bool longitude_cyclic, const torch::TensorOptions& options = {});

// Multi-head self-attention inside each window with a learned
// relative-position bias table of (2 * window - 1)^2 entries per head.
class WindowAttentionImpl : public torch::nn::Module {
 public:
  WindowAttentionImpl(std::int64_t dim, std::int64_t n_heads, std::int64_t window);

  // windows: [B * n_windows, N, C]. When `weights` is non-null it receives the
  // post-softmax attention, [B * n_windows, heads, N, N].
  torch::Tensor forward(const torch::Tensor& windows, const torch::Tensor& mask = {},
                        torch::Tensor* weights = nullptr);

  torch::nn::Linear qkv{nullptr};
  torch::nn::Linear proj{nullptr};
  torch::Tensor relative_position_bias_table;

 private:
  std::int64_t dim_;
  std::int64_t n_heads_;
  std::int64_t window_;
  torch::Tensor relative_position_index_;
};
TORCH_MODULE(WindowAttention);

// Pre-norm transformer block: x + attn(norm(x)), then x + mlp(norm(x)).
class SwinBlockImpl : public torch::nn::Module {
 public:
  explicit SwinBlockImpl(const SwinBlockConfig& cfg);

  torch::Tensor forward(const torch::Tensor& x);
  // Zeroes both residual branch outputs, turning the block into the identity.
  void zero_output_projections();

  const SwinBlockConfig& config() const { return cfg_; }
  const WindowGeometry& geometry() const { return geom_; }

  torch::nn::LayerNorm norm1{nullptr};
  WindowAttention attn{nullptr};
  torch::nn::LayerNorm norm2{nullptr};
  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};

 private:
  SwinBlockConfig cfg_;
  WindowGeometry geom_;
  std::int64_t padded_h_;
  std::int64_t padded_w_;
  torch::Tensor mask_;
};
TORCH_MODULE(SwinBlock);

// 2x2 patch merge followed by LayerNorm and a bias-free linear projection:
// [B, H, W, C] -> [B, H/2, W/2, out_dim].
class PatchMergingImpl : public torch::nn::Module {
 public:
  PatchMergingImpl(std::int64_t in_dim, std::int64_t out_dim);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear reduction{nullptr};
};
TORCH_MODULE(PatchMerging);

// Truncated-normal(0, 0.02) weights and zero bias, the transformer default.
void init_linear(torch::nn::Linear& layer);

// Linear layer as one GEMM per leading index of x [B, ..., in]. BLAS picks
// kernels by row count, so a single flattened GEMM gives results that change
// with the batch size; this keeps every sample's output batch-independent.
// Applies under NoGradGuard (inference); with grad mode on it is a plain
// flattened linear.
torch::Tensor apply_linear(const torch::nn::LinearImpl& layer, const torch::Tensor& x);

}  // namespace swinvrnn
