#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "swinvrnn/backbone.hpp"
#include "swinvrnn/key_value.hpp"
#include "swinvrnn/perturbation.hpp"

namespace swinvrnn {

// kControl is the single unperturbed member, stored like an ensemble so
// evaluation treats both alike.
enum class EnsembleMethod { kFixed, kMcDropout, kLearned, kMultiModel, kControl };

// "fixed-distribution", "mc-dropout", "learned-distribution", "multi-model",
// "control"; parse also accepts "fixed" and "learned".
const char* to_string(EnsembleMethod method);
EnsembleMethod parse_ensemble_method(const std::string& text);

struct EnsembleConfig {
  EnsembleMethod method = EnsembleMethod::kLearned;
  // Members per model (multi-model runs this many from each checkpoint).
  std::int64_t n_members = 100;
  // Input-noise scale in normalized units.
  double sigma = 0.02;
  // Inference dropout rate for mc-dropout.
  double dropout_rate = 0.1;
  std::vector<std::filesystem::path> checkpoints;
  std::uint64_t seed = 0;
  // Lead steps; 0 means the model's t_pred.
  std::int64_t n_steps = 0;
  // Members evaluated together as one batch; 0 runs them all at once.
  std::int64_t member_batch = 16;

  void validate() const;
  void write(KeyValueText& kv, const std::string& prefix = "ensemble.") const;
  static EnsembleConfig read(const KeyValueText& kv, const std::string& prefix = "ensemble.");
};

struct MemberProvenance {
  std::string model_id;
  std::uint64_t seed = 0;
  std::int64_t member = 0;  // stream index within the model
};

struct EnsembleForecast {
  EnsembleMethod method = EnsembleMethod::kFixed;
  torch::Tensor members;  // [M, n_out, T, H, W], normalized units
  torch::Tensor mean;     // [n_out, T, H, W]
  std::vector<MemberProvenance> provenance;

  std::int64_t n_members() const { return members.size(0); }
};

// Arithmetic member average, accumulated in float64.
torch::Tensor ensemble_mean(const torch::Tensor& members);
torch::Tensor ensemble_mean(const EnsembleForecast& forecast);

// Unperturbed deterministic rollout; history [n_in, t_hist, H, W] or with a
// leading batch of 1. Returns [n_out, T, H, W].
torch::Tensor control_forecast(SwinRNN model, const torch::Tensor& history, std::int64_t n_steps);
// The control as a one-member forecast (method kControl).
EnsembleForecast forecast_control(SwinRNN model, const torch::Tensor& history, std::int64_t n_steps,
                                  const std::string& model_id = "model");

// sigma * N(0, I) added to every step input, independently per member.
EnsembleForecast forecast_fixed(SwinRNN model, const torch::Tensor& history, const EnsembleConfig& cfg,
                                const std::string& model_id = "model");
// Fresh dropout masks per member and step. Throws ConfigError when the model
// was built without dropout.
EnsembleForecast forecast_mc_dropout(SwinRNN model, const torch::Tensor& history, const EnsembleConfig& cfg,
                                     const std::string& model_id = "model");

using LatentTransform = std::function<LatentDistribution(std::int64_t step, const LatentDistribution&)>;

// z_t drawn from the prior at every step.
EnsembleForecast forecast_learned(SwinVRNN model, const torch::Tensor& history, const EnsembleConfig& cfg,
                                  const std::string& model_id = "model", const LatentTransform& transform = {});
// Learned-distribution members from every model, concatenated in model order.
// Model i's members use stream indices i * n_members + m. Throws ConfigError
// when grids or catalogs disagree.
EnsembleForecast forecast_multi_model(const std::vector<SwinVRNN>& models, const std::vector<std::string>& model_ids,
                                      const torch::Tensor& history, const EnsembleConfig& cfg);
// Loads cfg.checkpoints (at least two).
EnsembleForecast forecast_multi_model(const torch::Tensor& history, const EnsembleConfig& cfg);

// Artifact directory: manifest.txt, member_NNN.f32 per member and mean.f32.
inline constexpr const char* kEnsembleFormat = "swinvrnn-ensemble/1";
void write_ensemble(const EnsembleForecast& forecast, const std::filesystem::path& dir,
                    const KeyValueText& extra = {});
EnsembleForecast read_ensemble(const std::filesystem::path& dir, KeyValueText* manifest = nullptr);

}  // namespace swinvrnn
