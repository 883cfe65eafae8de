#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "swinvrnn/key_value.hpp"
#include "swinvrnn/noise.hpp"
#include "swinvrnn/swin.hpp"

namespace swinvrnn {

enum class DecoderKind { kSwin, kGated };

const char* to_string(DecoderKind kind);
DecoderKind parse_decoder_kind(const std::string& text);

struct ModelConfig {
  std::int64_t n_in = 71;
  std::int64_t n_out = 69;
  std::int64_t t_hist = 6;
  std::int64_t t_pred = 20;
  std::int64_t height = 32;
  std::int64_t width = 64;
  std::int64_t base_dim = 96;
  std::array<std::int64_t, 4> stage_dims{96, 192, 384, 768};
  std::int64_t decoder_depth = 6;
  std::int64_t window = 8;
  double mlp_ratio = 4.0;
  bool longitude_cyclic = true;
  // Ablation switches.
  bool residual = true;
  bool multi_scale = true;
  DecoderKind decoder = DecoderKind::kSwin;
  // Dropout after each decoder fusion projection; only active when a rollout
  // asks for it (training or MC-dropout inference).
  double dropout_rate = 0.0;
  // Start the predictor at zero so an untrained model forecasts persistence.
  bool zero_init_predictor = false;

  void validate() const;
  std::int64_t n_scales() const { return multi_scale ? 4 : 1; }
  std::int64_t scale_height(std::int64_t s) const { return height >> s; }
  std::int64_t scale_width(std::int64_t s) const { return width >> s; }

  void write(KeyValueText& kv, const std::string& prefix = "model.") const;
  static ModelConfig read(const KeyValueText& kv, const std::string& prefix = "model.");
};

// Per-scale hidden states h1..h4, channels-last [B, H >> s, W >> s, stage_dims[s]].
// A single-scale model keeps only h1.
using HiddenStatePyramid = std::vector<torch::Tensor>;

// Per-cell projection of the whole (channel, time) cube, i.e. a Conv3d with
// kernel and stride (T, 1, 1): [B, n_in, T, H, W] -> [B, H, W, base_dim].
// Embeddings are written as patchify + Linear rather than oneDNN convolutions,
// whose results change with the batch size.
class CubeEmbedImpl : public torch::nn::Module {
 public:
  CubeEmbedImpl(std::int64_t n_in, std::int64_t t_hist, std::int64_t dim);
  torch::Tensor forward(const torch::Tensor& history);

  torch::nn::Linear proj{nullptr};

 private:
  std::int64_t n_in_;
  std::int64_t t_hist_;
};
TORCH_MODULE(CubeEmbed);

// Four stages of two Swin blocks; patch merging after stages 1-3.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const ModelConfig& cfg);
  HiddenStatePyramid forward(const torch::Tensor& tokens);

  torch::nn::ModuleList stages{nullptr};
  torch::nn::ModuleList merges{nullptr};

 private:
  std::int64_t n_scales_;
};
TORCH_MODULE(Encoder);

// Strided patch embedding of x_t onto scale s: kernel = stride = 2^s.
class ScaleEmbedImpl : public torch::nn::Module {
 public:
  ScaleEmbedImpl(std::int64_t n_out, std::int64_t dim, std::int64_t scale);
  // [B, n_out, H, W] -> [B, H >> s, W >> s, dim]
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear proj{nullptr};

 private:
  std::int64_t n_out_;
  std::int64_t k_;
};
TORCH_MODULE(ScaleEmbed);

// Randomness a decoder step may consume.
struct StepRandomness {
  const NoiseStreams* streams = nullptr;
  std::int64_t step = 0;
  bool dropout = false;
  // Replaces the configured dropout rate when set.
  std::optional<double> dropout_rate;
};

// One recurrent update at one scale: embed x_t, fuse with h, then
// decoder_depth Swin blocks (or a convolutional gated update).
class ScaleDecoderImpl : public torch::nn::Module {
 public:
  ScaleDecoderImpl(const ModelConfig& cfg, std::int64_t scale);
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& h, const StepRandomness& rnd);

  ScaleEmbed embed{nullptr};
  torch::nn::Linear fuse{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  // Gated variant: 3x3 convolutions on the sphere-padded grid, as im2col + Linear.
  torch::nn::Linear gates{nullptr};
  torch::nn::Linear candidate{nullptr};

 private:
  std::int64_t scale_;
  std::int64_t dim_;
  double dropout_rate_;
  DecoderKind kind_;
};
TORCH_MODULE(ScaleDecoder);

// Nearest-upsample coarse scales, concatenate with h1, project to n_out.
class PredictorImpl : public torch::nn::Module {
 public:
  explicit PredictorImpl(const ModelConfig& cfg);
  // Returns delta as a field [B, n_out, H, W].
  torch::Tensor forward(const HiddenStatePyramid& pyramid);
  void zero_init();

  torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(Predictor);

// Observation of one rollout step, for instrumentation.
struct StepRecord {
  std::int64_t step = 0;       // 0-based
  torch::Tensor input;         // x_t actually fed to the decoders (after noise)
  torch::Tensor output;        // x_{t+1}
  bool perturbed = false;      // a latent was injected this step
};

// Called before the decoder update with the current pyramid; returns the
// pyramid to update (e.g. with a latent injected). `x_next` is the true next
// frame when targets are available, undefined otherwise.
using PyramidPerturber = std::function<HiddenStatePyramid(std::int64_t step, const torch::Tensor& x_t,
                                                          const HiddenStatePyramid& pyramid,
                                                          const torch::Tensor& x_next)>;

struct RolloutOptions {
  std::int64_t n_steps = 1;
  // Teacher forcing: true frames [B, n_out, n_steps, H, W] and the per-step,
  // per-sequence probability of feeding the true frame as the next input.
  torch::Tensor targets;
  double teacher_ratio = 0.0;
  // Additive N(0, sigma^2) noise on every step input, in normalized units.
  double input_noise_sigma = 0.0;
  bool dropout = false;
  std::optional<double> dropout_rate;
  const NoiseStreams* streams = nullptr;
  PyramidPerturber perturber;
  std::function<void(const StepRecord&)> on_step;
};

// Deterministic recurrent predictor.
class SwinRNNImpl : public torch::nn::Module {
 public:
  explicit SwinRNNImpl(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  torch::Tensor embed(const torch::Tensor& history) { return cube->forward(history); }
  HiddenStatePyramid encode(const torch::Tensor& history);
  HiddenStatePyramid decoder_step(const torch::Tensor& x_t, const HiddenStatePyramid& pyramid,
                                  const StepRandomness& rnd = {});
  torch::Tensor predict_residual(const HiddenStatePyramid& pyramid) { return predictor->forward(pyramid); }

  // history [B, n_in, t_hist, H, W] normalized -> [B, n_out, n_steps, H, W].
  torch::Tensor rollout(const torch::Tensor& history, const RolloutOptions& options);
  torch::Tensor rollout(const torch::Tensor& history, std::int64_t n_steps);

  CubeEmbed cube{nullptr};
  Encoder encoder{nullptr};
  torch::nn::ModuleList decoders{nullptr};
  Predictor predictor{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(SwinRNN);

// Prognostic channels of the last history frame: [B, n_out, H, W].
torch::Tensor last_frame(const torch::Tensor& history, std::int64_t n_out);

// Raises NumericalDivergence when `x` holds a non-finite value.
void check_finite(const torch::Tensor& x, std::int64_t step, const char* what);

}  // namespace swinvrnn
