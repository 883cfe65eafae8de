#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "swinvrnn/backbone.hpp"

namespace swinvrnn {

// Per-channel Gaussian over the k latent sites. Leading dims are free:
// mean [..., C_z, k], chol [..., C_z, k, k] lower triangular with positive diagonal.
struct LatentDistribution {
  torch::Tensor mean;
  torch::Tensor chol;

  std::int64_t channels() const { return mean.size(-2); }
  std::int64_t sites() const { return mean.size(-1); }
  // Throws InvalidDistribution on shape mismatch or a non-positive diagonal.
  void validate() const;
  torch::Tensor covariance() const { return torch::matmul(chol, chol.transpose(-1, -2)); }
};

// z = mean + chol * eps, eps shaped like mean. Differentiable in mean and chol.
torch::Tensor sample_latent(const LatentDistribution& dist, const torch::Tensor& eps);

// KL(q || p) summed over channels; result has the leading dims of `mean`
// without the channel and site axes. Uses triangular solves against p.chol.
torch::Tensor kl_divergence(const LatentDistribution& q, const LatentDistribution& p);

// softplus^-1(1) = ln(e - 1): diagonal offset making a zeroed head emit I.
double inverse_softplus(double y);

struct PerturbationConfig {
  double beta = 1e-4;
  // Pyramid level hosting z (0 = full resolution, 3 = coarsest).
  std::int64_t latent_scale = 3;
  std::int64_t latent_channels = 16;
  // Share of phase-2 steps over which the injection multiplier ramps 0 -> 1.
  double ramp_fraction = 0.1;
  // Zero the strictly lower Cholesky entries (independent sites).
  bool diagonal_only = false;

  void validate(const ModelConfig& model) const;
  void write(KeyValueText& kv, const std::string& prefix = "perturbation.") const;
  static PerturbationConfig read(const KeyValueText& kv, const std::string& prefix = "perturbation.");
};

// Linear warmup: step / ramp_steps clipped to [0, 1]; 1 when ramp_steps is 0.
double ramp_multiplier(std::int64_t step, std::int64_t ramp_steps);

// Posterior and prior share this architecture: embed the conditioning frame to
// the latent scale, fuse with the hidden state, one Swin block, then per-site
// heads for the mean and for row i of each channel's Cholesky factor.
class LatentNetImpl : public torch::nn::Module {
 public:
  LatentNetImpl(const ModelConfig& model, const PerturbationConfig& cfg, double diag_offset);

  // x [B, n_out, H, W], h [B, H_z, W_z, dim] -> distribution with mean [B, C_z, k].
  LatentDistribution forward(const torch::Tensor& x, const torch::Tensor& h);
  void zero_heads();

  ScaleEmbed embed{nullptr};
  torch::nn::Linear fuse{nullptr};
  SwinBlock block{nullptr};
  torch::nn::Linear mean_head{nullptr};
  torch::nn::Linear chol_head{nullptr};

 private:
  std::int64_t c_z_;
  std::int64_t sites_;
  double diag_offset_;
  bool diagonal_only_;
};
TORCH_MODULE(LatentNet);

// Adds ramp * W_s * resize(z) to every pyramid scale.
class LatentInjectorImpl : public torch::nn::Module {
 public:
  LatentInjectorImpl(const ModelConfig& model, const PerturbationConfig& cfg);
  // z: [B, C_z, k]
  HiddenStatePyramid forward(const HiddenStatePyramid& pyramid, const torch::Tensor& z, double ramp);

  torch::nn::ModuleList projections{nullptr};

 private:
  std::int64_t c_z_;
  std::int64_t h_z_;
  std::int64_t w_z_;
};
TORCH_MODULE(LatentInjector);

enum class LatentSource { kNone, kPosterior, kPrior };
const char* to_string(LatentSource source);
inline std::ostream& operator<<(std::ostream& os, LatentSource source) { return os << to_string(source); }

struct VrnnOptions {
  RolloutOptions base;
  // Unset: posterior in training mode, prior in evaluation mode.
  std::optional<LatentSource> source;
  double ramp = 1.0;
  // Evaluate the prior next to the posterior and record KL(q || p) per step.
  bool compute_kl = false;
  // Replaces the sampling distribution before drawing (instrumentation).
  std::function<LatentDistribution(std::int64_t step, const LatentDistribution&)> transform;
  std::function<void(std::int64_t step, const LatentDistribution&)> on_latent;
};

struct VrnnRollout {
  torch::Tensor forecast;              // [B, n_out, n_steps, H, W]
  std::vector<torch::Tensor> kl;       // per step, [B], summed over latent channels
  std::vector<LatentSource> sources;   // per step
};

class SwinVRNNImpl : public torch::nn::Module {
 public:
  SwinVRNNImpl(const ModelConfig& model, const PerturbationConfig& cfg);

  const ModelConfig& model_config() const { return backbone->config(); }
  const PerturbationConfig& perturbation_config() const { return cfg_; }

  LatentSource sampling_source() const { return is_training() ? LatentSource::kPosterior : LatentSource::kPrior; }

  // Posterior needs `base.targets`; both sampling modes need `base.streams`.
  VrnnRollout rollout(const torch::Tensor& history, const VrnnOptions& options);

  // Parameters outside the backbone.
  std::vector<torch::Tensor> perturbation_parameters();

  SwinRNN backbone{nullptr};
  LatentNet posterior{nullptr};
  LatentNet prior{nullptr};
  LatentInjector injector{nullptr};

 private:
  PerturbationConfig cfg_;
};
TORCH_MODULE(SwinVRNN);

}  // namespace swinvrnn
