#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "swinvrnn/backbone.hpp"
#include "swinvrnn/key_value.hpp"
#include "swinvrnn/perturbation.hpp"
#include "swinvrnn/sequences.hpp"

namespace swinvrnn {

// Mean squared error over every channel, step and cell.
torch::Tensor reconstruction_loss(const torch::Tensor& pred, const torch::Tensor& target);

// recon + beta * mean(kl_per_step); an empty list contributes nothing.
torch::Tensor elbo_loss(const torch::Tensor& recon, const std::vector<torch::Tensor>& kl_per_step, double beta);
double elbo_loss(double recon, const std::vector<double>& kl_per_step, double beta);

// Scheduled-sampling probability: 1 at epoch 0, decaying geometrically so the
// shifted, rescaled curve (k^e - floor) / (1 - floor) reaches 0 at 80% of the
// run, then 0 until the end.
double teacher_forcing_schedule(std::int64_t epoch, std::int64_t total_epochs, double floor = 0.01);

// Half-cosine decay from `base` at step 0 to 0 at `total_steps`.
double cosine_lr(double base, std::int64_t step, std::int64_t total_steps);

struct TrainConfig {
  int phase = 1;
  std::int64_t epochs = 100;
  // Stops early once this many optimizer steps ran (0: no cap).
  std::int64_t max_steps = 0;
  std::int64_t batch_size = 8;
  double lr_backbone = 2e-4;
  double lr_perturbation = 2e-4;
  bool cosine = true;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double clip_norm = 1.0;
  double teacher_floor = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  // Steps the cosine schedule and ramp are laid out over.
  std::int64_t planned_steps(std::int64_t n_windows) const;
  std::int64_t steps_per_epoch(std::int64_t n_windows) const;

  void write(KeyValueText& kv, const std::string& prefix = "train.") const;
  static TrainConfig read(const KeyValueText& kv, const std::string& prefix = "train.");
};

struct StepMetrics {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  double lr = 0.0;
  double tf_ratio = 0.0;
  double ramp = 0.0;

  std::string json() const;
};

struct FitOptions {
  // Checkpoint directory (written after every epoch and at the end) and a
  // line-delimited JSON log; both optional.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::optional<std::filesystem::path> log_path;
  std::function<void(const StepMetrics&)> on_step;
};

struct FitResult {
  std::vector<StepMetrics> steps;
  std::vector<double> epoch_loss;
  std::int64_t epochs_run = 0;
};

// Owns the optimizer for one training phase. Phase 1 trains a SwinRNN with
// scheduled sampling; phase 2 trains the SwinVRNN jointly with the ELBO,
// sampling z from the posterior, with separate backbone / perturbation
// learning rates. All randomness derives from (seed, step).
class Trainer {
 public:
  Trainer(SwinRNN model, TrainConfig cfg);
  Trainer(SwinVRNN model, TrainConfig cfg);

  int phase() const { return cfg_.phase; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t global_step() const { return step_; }
  std::int64_t epoch() const { return epoch_; }

  // One optimizer update on a batch; `planned_steps` fixes the lr and ramp schedule.
  StepMetrics train_step(const torch::Tensor& history, const torch::Tensor& target, std::int64_t planned_steps);
  // Loss of a batch at the current parameters and step without updating.
  StepMetrics evaluate_step(const torch::Tensor& history, const torch::Tensor& target, std::int64_t planned_steps);

  FitResult fit(const SequenceWindows& data, const FitOptions& options = {});

  void save(const std::filesystem::path& dir) const;
  // Restores parameters, optimizer moments and counters.
  void load(const std::filesystem::path& dir);

  torch::nn::Module& module();

 private:
  void build_optimizer();
  StepMetrics run_batch(const torch::Tensor& history, const torch::Tensor& target, std::int64_t planned_steps,
                        bool update);

  TrainConfig cfg_;
  SwinRNN rnn_{nullptr};
  SwinVRNN vrnn_{nullptr};
  std::unique_ptr<torch::optim::AdamW> optimizer_;
  std::int64_t step_ = 0;
  std::int64_t epoch_ = 0;
  std::vector<double> epoch_loss_;
};

// Checkpoint directory I/O. A checkpoint holds manifest.txt plus one
// little-endian float32 blob per named parameter (and optimizer moment).
inline constexpr const char* kCheckpointFormat = "swinvrnn-checkpoint/1";

enum class ModelKind { kSwinRNN, kSwinVRNN };

struct CheckpointInfo {
  ModelKind kind = ModelKind::kSwinRNN;
  int phase = 1;
  ModelConfig model;
  std::optional<PerturbationConfig> perturbation;
  KeyValueText manifest;
};

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);
void save_parameters(const torch::nn::Module& module, const std::filesystem::path& dir, KeyValueText& manifest);
// Copies blobs into `module`'s parameters. A module parameter named
// `strip_prefix + rest` reads the blob `blob_prefix + rest`; parameters outside
// `strip_prefix` are left alone. Missing blobs raise CatalogMismatch.
void load_parameters(torch::nn::Module& module, const std::filesystem::path& dir, const std::string& strip_prefix = "",
                     const std::string& blob_prefix = "");

SwinRNN load_swinrnn(const std::filesystem::path& dir);
// Phase-2 checkpoints load whole; a phase-1 checkpoint seeds the backbone of
// a fresh SwinVRNN built with `perturbation`.
SwinVRNN load_swinvrnn(const std::filesystem::path& dir, const PerturbationConfig* perturbation = nullptr);
// Parameters-only checkpoint of a trained model.
void save_model(SwinRNN model, const std::filesystem::path& dir);
void save_model(SwinVRNN model, const std::filesystem::path& dir);

// KL between the step-1 posteriors given two alternative next frames under a
// shared history, averaged over the batch. Positive values mean the latent
// distinguishes the two futures.
double posterior_pair_kl(SwinVRNN model, const torch::Tensor& history, const torch::Tensor& next_a,
                         const torch::Tensor& next_b);

}  // namespace swinvrnn
