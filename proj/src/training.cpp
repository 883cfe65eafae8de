#include "swinvrnn/training.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include <nlohmann/json.hpp>

#include "swinvrnn/binary_io.hpp"
#include "swinvrnn/errors.hpp"
#include "swinvrnn/tensor_io.hpp"

namespace swinvrnn {

namespace fs = std::filesystem;

torch::Tensor reconstruction_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  if (pred.sizes() != target.sizes()) throw ShapeError("prediction and target shapes differ");
  return (pred - target).pow(2).mean();
}

torch::Tensor elbo_loss(const torch::Tensor& recon, const std::vector<torch::Tensor>& kl_per_step, double beta) {
  if (kl_per_step.empty() || beta == 0.0) return recon;
  return recon + beta * torch::stack(kl_per_step).mean();
}

double elbo_loss(double recon, const std::vector<double>& kl_per_step, double beta) {
  if (kl_per_step.empty()) return recon;
  double sum = 0.0;
  for (double k : kl_per_step) sum += k;
  return recon + beta * (sum / static_cast<double>(kl_per_step.size()));
}

double teacher_forcing_schedule(std::int64_t epoch, std::int64_t total_epochs, double floor) {
  if (total_epochs < 1 || epoch < 0 || epoch >= total_epochs) {
    throw PreconditionError("teacher forcing schedule needs 0 <= epoch < total_epochs");
  }
  if (!(floor > 0.0 && floor < 1.0)) throw ConfigError("train.teacher_floor must lie in (0, 1)");
  if (epoch == 0) return 1.0;
  const double horizon = 0.8 * static_cast<double>(total_epochs - 1);
  if (static_cast<double>(epoch) >= horizon) return 0.0;
  const double k = std::pow(floor, 1.0 / horizon);
  return std::max(0.0, (std::pow(k, static_cast<double>(epoch)) - floor) / (1.0 - floor));
}

double cosine_lr(double base, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) return base;
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void TrainConfig::validate() const {
  if (phase != 1 && phase != 2) throw ConfigError("train.phase must be 1 or 2");
  if (epochs < 1) throw ConfigError("train.epochs must be positive");
  if (max_steps < 0) throw ConfigError("train.max_steps must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (lr_backbone <= 0.0 || lr_perturbation <= 0.0) throw ConfigError("learning rates must be positive");
  if (phase == 2 && !(lr_backbone < lr_perturbation)) {
    throw ConfigError("train.lr_backbone must be smaller than train.lr_perturbation in phase 2");
  }
  if (clip_norm <= 0.0) throw ConfigError("train.clip_norm must be positive");
  if (!(teacher_floor > 0.0 && teacher_floor < 1.0)) throw ConfigError("train.teacher_floor must lie in (0, 1)");
}

std::int64_t TrainConfig::steps_per_epoch(std::int64_t n_windows) const {
  return (n_windows + batch_size - 1) / batch_size;
}

std::int64_t TrainConfig::planned_steps(std::int64_t n_windows) const {
  const auto full = epochs * steps_per_epoch(n_windows);
  return max_steps > 0 ? std::min(full, max_steps) : full;
}

void TrainConfig::write(KeyValueText& kv, const std::string& prefix) const {
  kv.set(prefix + "phase", phase);
  kv.set(prefix + "epochs", epochs);
  kv.set(prefix + "max_steps", max_steps);
  kv.set(prefix + "batch_size", batch_size);
  kv.set(prefix + "lr_backbone", lr_backbone);
  kv.set(prefix + "lr_perturbation", lr_perturbation);
  kv.set(prefix + "lr_schedule", cosine ? "cosine" : "constant");
  kv.set(prefix + "weight_decay", weight_decay);
  kv.set(prefix + "adam_beta1", adam_beta1);
  kv.set(prefix + "adam_beta2", adam_beta2);
  kv.set(prefix + "clip_norm", clip_norm);
  kv.set(prefix + "teacher_floor", teacher_floor);
  kv.set(prefix + "seed", static_cast<std::int64_t>(seed));
}

TrainConfig TrainConfig::read(const KeyValueText& kv, const std::string& prefix) {
  TrainConfig cfg;
  auto has = [&](const char* k) { return kv.contains(prefix + k); };
  if (has("phase")) cfg.phase = static_cast<int>(kv.get_int(prefix + "phase"));
  if (has("epochs")) cfg.epochs = kv.get_int(prefix + "epochs");
  if (has("max_steps")) cfg.max_steps = kv.get_int(prefix + "max_steps");
  if (has("batch_size")) cfg.batch_size = kv.get_int(prefix + "batch_size");
  if (has("lr_backbone")) cfg.lr_backbone = kv.get_double(prefix + "lr_backbone");
  if (has("lr_perturbation")) cfg.lr_perturbation = kv.get_double(prefix + "lr_perturbation");
  if (has("lr_schedule")) {
    const auto& s = kv.at(prefix + "lr_schedule");
    if (s != "cosine" && s != "constant") throw ConfigError(prefix + "lr_schedule must be cosine or constant");
    cfg.cosine = s == "cosine";
  }
  if (has("weight_decay")) cfg.weight_decay = kv.get_double(prefix + "weight_decay");
  if (has("adam_beta1")) cfg.adam_beta1 = kv.get_double(prefix + "adam_beta1");
  if (has("adam_beta2")) cfg.adam_beta2 = kv.get_double(prefix + "adam_beta2");
  if (has("clip_norm")) cfg.clip_norm = kv.get_double(prefix + "clip_norm");
  if (has("teacher_floor")) cfg.teacher_floor = kv.get_double(prefix + "teacher_floor");
  if (has("seed")) cfg.seed = static_cast<std::uint64_t>(kv.get_int(prefix + "seed"));
  return cfg;
}

std::string StepMetrics::json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["recon"] = recon;
  j["kl"] = kl;
  j["lr"] = lr;
  j["tf_ratio"] = tf_ratio;
  j["ramp"] = ramp;
  return j.dump();
}

Trainer::Trainer(SwinRNN model, TrainConfig cfg) : cfg_(std::move(cfg)), rnn_(std::move(model)) {
  if (cfg_.phase != 1) throw PreconditionError("a deterministic SwinRNN trains in phase 1 only");
  cfg_.validate();
  build_optimizer();
}

Trainer::Trainer(SwinVRNN model, TrainConfig cfg) : cfg_(std::move(cfg)), vrnn_(std::move(model)) {
  if (cfg_.phase != 2) throw PreconditionError("a SwinVRNN trains in phase 2 only");
  cfg_.validate();
  build_optimizer();
}

torch::nn::Module& Trainer::module() {
  if (rnn_) return *rnn_;
  return *vrnn_;
}

void Trainer::build_optimizer() {
  auto options = torch::optim::AdamWOptions(cfg_.lr_backbone)
                     .betas({cfg_.adam_beta1, cfg_.adam_beta2})
                     .weight_decay(cfg_.weight_decay);
  std::vector<torch::optim::OptimizerParamGroup> groups;
  if (rnn_) {
    groups.emplace_back(rnn_->parameters(), std::make_unique<torch::optim::AdamWOptions>(options));
  } else {
    groups.emplace_back(vrnn_->backbone->parameters(), std::make_unique<torch::optim::AdamWOptions>(options));
    auto pert = options;
    pert.lr(cfg_.lr_perturbation);
    groups.emplace_back(vrnn_->perturbation_parameters(), std::make_unique<torch::optim::AdamWOptions>(pert));
  }
  optimizer_ = std::make_unique<torch::optim::AdamW>(std::move(groups), options);
}

StepMetrics Trainer::train_step(const torch::Tensor& history, const torch::Tensor& target,
                                std::int64_t planned_steps) {
  return run_batch(history, target, planned_steps, true);
}

StepMetrics Trainer::evaluate_step(const torch::Tensor& history, const torch::Tensor& target,
                                   std::int64_t planned_steps) {
  return run_batch(history, target, planned_steps, false);
}

StepMetrics Trainer::run_batch(const torch::Tensor& history, const torch::Tensor& target, std::int64_t planned_steps,
                               bool update) {
  StepMetrics m;
  m.step = step_;
  m.epoch = epoch_;
  const std::array<double, 2> base{cfg_.lr_backbone, cfg_.lr_perturbation};
  auto streams = NoiseStreams::for_batch(derive_seed(cfg_.seed, {static_cast<std::uint64_t>(step_)}), history.size(0));

  RolloutOptions opt;
  opt.n_steps = target.size(2);
  opt.targets = target;
  opt.streams = &streams;
  torch::Tensor loss;
  if (rnn_) {
    rnn_->train();
    m.tf_ratio = teacher_forcing_schedule(std::min(epoch_, cfg_.epochs - 1), cfg_.epochs, cfg_.teacher_floor);
    opt.teacher_ratio = m.tf_ratio;
    opt.dropout = rnn_->config().dropout_rate > 0.0;
    auto pred = rnn_->rollout(history, opt);
    loss = reconstruction_loss(pred, target);
    m.recon = loss.item<double>();
  } else {
    vrnn_->train();
    const auto& pcfg = vrnn_->perturbation_config();
    const auto ramp_steps = static_cast<std::int64_t>(std::ceil(pcfg.ramp_fraction * static_cast<double>(planned_steps)));
    m.ramp = ramp_multiplier(step_, ramp_steps);
    opt.dropout = vrnn_->model_config().dropout_rate > 0.0;
    VrnnOptions vopt;
    vopt.base = opt;
    vopt.source = LatentSource::kPosterior;
    vopt.compute_kl = true;
    vopt.ramp = m.ramp;
    auto out = vrnn_->rollout(history, vopt);
    auto recon = reconstruction_loss(out.forecast, target);
    std::vector<torch::Tensor> kl;
    kl.reserve(out.kl.size());
    for (const auto& k : out.kl) kl.push_back(k.mean() / static_cast<double>(pcfg.latent_channels));
    loss = elbo_loss(recon, kl, pcfg.beta);
    m.recon = recon.item<double>();
    m.kl = kl.empty() ? 0.0 : torch::stack(kl).mean().item<double>();
  }
  m.loss = loss.item<double>();
  m.lr = cfg_.cosine ? cosine_lr(cfg_.lr_backbone, step_, planned_steps) : cfg_.lr_backbone;
  if (!std::isfinite(m.loss)) throw NumericalDivergence(step_, "non-finite training loss at step " + std::to_string(step_));
  if (!update) return m;

  auto& groups = optimizer_->param_groups();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double lr = cfg_.cosine ? cosine_lr(base[g], step_, planned_steps) : base[g];
    static_cast<torch::optim::AdamWOptions&>(groups[g].options()).lr(lr);
  }
  optimizer_->zero_grad();
  loss.backward();
  std::vector<torch::Tensor> params;
  for (auto& g : groups) params.insert(params.end(), g.params().begin(), g.params().end());
  torch::nn::utils::clip_grad_norm_(params, cfg_.clip_norm);
  optimizer_->step();
  ++step_;
  return m;
}

FitResult Trainer::fit(const SequenceWindows& data, const FitOptions& options) {
  if (data.empty()) throw PreconditionError("training set holds no complete sequence window");
  FitResult result;
  const auto n = data.size();
  const auto planned = cfg_.planned_steps(n);
  std::ofstream log;
  if (options.log_path) {
    log.open(*options.log_path, step_ == 0 ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot open training log " + options.log_path->string());
  }
  if (options.checkpoint_dir && step_ == 0) save(*options.checkpoint_dir);

  auto restore_and_throw = [&](std::int64_t step, const std::string& why) {
    std::string msg = "training diverged at step " + std::to_string(step) + ": " + why;
    if (options.checkpoint_dir && fs::exists(*options.checkpoint_dir / "manifest.txt")) {
      load(*options.checkpoint_dir);
      msg += "; restored checkpoint at step " + std::to_string(step_) + " from " + options.checkpoint_dir->string();
    }
    throw NumericalDivergence(step, msg);
  };

  while (epoch_ < cfg_.epochs && step_ < planned) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(
        derive_seed(cfg_.seed, {0x0e90c8ULL, static_cast<std::uint64_t>(epoch_)}));
    auto order = torch::randperm(n, gen, torch::kLong);
    const auto* idx = order.data_ptr<std::int64_t>();
    double epoch_sum = 0.0;
    std::int64_t epoch_batches = 0;
    for (std::int64_t first = 0; first < n && step_ < planned; first += cfg_.batch_size) {
      const auto count = std::min(cfg_.batch_size, n - first);
      auto [history, target] = data.batch(std::span<const std::int64_t>(idx + first, static_cast<std::size_t>(count)));
      StepMetrics m;
      try {
        m = train_step(history, target, planned);
      } catch (const NumericalDivergence& e) {
        restore_and_throw(step_, e.what());
      }
      epoch_sum += m.loss;
      ++epoch_batches;
      if (log) log << m.json() << '\n';
      if (options.on_step) options.on_step(m);
      result.steps.push_back(m);
    }
    epoch_loss_.push_back(epoch_sum / static_cast<double>(std::max<std::int64_t>(1, epoch_batches)));
    ++epoch_;
    ++result.epochs_run;
    if (log) log.flush();
    if (options.checkpoint_dir) save(*options.checkpoint_dir);
  }
  result.epoch_loss = epoch_loss_;
  return result;
}

namespace {

const char* kind_name(ModelKind kind) { return kind == ModelKind::kSwinRNN ? "swinrnn" : "swinvrnn"; }

// Replaces `dir` with the contents written by `fill` into a sibling temp dir.
template <typename Fill>
void write_directory(const fs::path& dir, Fill&& fill) {
  auto tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "params");
  fill(tmp);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

void write_model_manifest(KeyValueText& kv, ModelKind kind, int phase, const ModelConfig& model,
                          const PerturbationConfig* perturbation) {
  kv.set("format", kCheckpointFormat);
  kv.set("kind", kind_name(kind));
  kv.set("phase", phase);
  model.write(kv);
  if (perturbation) perturbation->write(kv);
}

}  // namespace

void save_parameters(const torch::nn::Module& module, const fs::path& dir, KeyValueText& manifest) {
  fs::create_directories(dir / "params");
  std::int64_t count = 0;
  for (const auto& item : module.named_parameters()) {
    const auto key = "param." + std::to_string(count);
    manifest.set(key + ".name", item.key());
    manifest.set(key + ".shape", shape_text(item.value().sizes()));
    write_tensor(dir / "params" / (item.key() + ".f32"), item.value());
    ++count;
  }
  manifest.set("param.count", count);
}

void load_parameters(torch::nn::Module& module, const fs::path& dir, const std::string& strip_prefix,
                     const std::string& blob_prefix) {
  auto manifest = KeyValueText::read(dir / "manifest.txt");
  std::map<std::string, std::vector<std::int64_t>> shapes;
  const auto count = manifest.get_int("param.count");
  for (std::int64_t i = 0; i < count; ++i) {
    const auto key = "param." + std::to_string(i);
    shapes[manifest.at(key + ".name")] = parse_shape(manifest.at(key + ".shape"));
  }
  torch::NoGradGuard guard;
  for (auto& item : module.named_parameters()) {
    const auto& name = item.key();
    if (name.compare(0, strip_prefix.size(), strip_prefix) != 0) continue;
    const auto blob = blob_prefix + name.substr(strip_prefix.size());
    auto it = shapes.find(blob);
    if (it == shapes.end()) throw CatalogMismatch("checkpoint " + dir.string() + " has no parameter '" + blob + "'");
    auto& param = item.value();
    if (torch::IntArrayRef(it->second) != param.sizes()) {
      throw ConfigError("parameter '" + blob + "' has shape " + shape_text(it->second) + " in the checkpoint but " +
                        shape_text(param.sizes()) + " in the model");
    }
    param.copy_(read_tensor(dir / "params" / (blob + ".f32"), it->second));
  }
}

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.txt")) throw PreconditionError("no checkpoint at " + dir.string());
  CheckpointInfo info;
  info.manifest = KeyValueText::read(dir / "manifest.txt");
  if (info.manifest.at("format") != kCheckpointFormat) {
    throw IoError(dir.string() + " is not a checkpoint (format '" + info.manifest.at("format") + "')");
  }
  const auto& kind = info.manifest.at("kind");
  if (kind == "swinrnn") {
    info.kind = ModelKind::kSwinRNN;
  } else if (kind == "swinvrnn") {
    info.kind = ModelKind::kSwinVRNN;
    info.perturbation = PerturbationConfig::read(info.manifest);
  } else {
    throw IoError("unknown checkpoint kind '" + kind + "'");
  }
  info.phase = static_cast<int>(info.manifest.get_int("phase"));
  info.model = ModelConfig::read(info.manifest);
  return info;
}

SwinRNN load_swinrnn(const fs::path& dir) {
  auto info = read_checkpoint_info(dir);
  SwinRNN model(info.model);
  load_parameters(*model, dir, "", info.kind == ModelKind::kSwinVRNN ? "backbone." : "");
  model->eval();
  return model;
}

SwinVRNN load_swinvrnn(const fs::path& dir, const PerturbationConfig* perturbation) {
  auto info = read_checkpoint_info(dir);
  if (info.kind == ModelKind::kSwinVRNN) {
    SwinVRNN model(info.model, *info.perturbation);
    load_parameters(*model, dir);
    model->eval();
    return model;
  }
  if (!perturbation) {
    throw ConfigError("checkpoint " + dir.string() +
                      " holds a deterministic phase-1 SwinRNN; a phase-2 SwinVRNN checkpoint is required");
  }
  SwinVRNN model(info.model, *perturbation);
  load_parameters(*model, dir, "backbone.", "");
  model->eval();
  return model;
}

void save_model(SwinRNN model, const fs::path& dir) {
  write_directory(dir, [&](const fs::path& tmp) {
    KeyValueText kv;
    write_model_manifest(kv, ModelKind::kSwinRNN, 1, model->config(), nullptr);
    save_parameters(*model, tmp, kv);
    kv.write(tmp / "manifest.txt");
  });
}

void save_model(SwinVRNN model, const fs::path& dir) {
  write_directory(dir, [&](const fs::path& tmp) {
    KeyValueText kv;
    write_model_manifest(kv, ModelKind::kSwinVRNN, 2, model->model_config(), &model->perturbation_config());
    save_parameters(*model, tmp, kv);
    kv.write(tmp / "manifest.txt");
  });
}

void Trainer::save(const fs::path& dir) const {
  write_directory(dir, [&](const fs::path& tmp) {
    KeyValueText kv;
    if (rnn_) {
      write_model_manifest(kv, ModelKind::kSwinRNN, 1, rnn_->config(), nullptr);
    } else {
      write_model_manifest(kv, ModelKind::kSwinVRNN, 2, vrnn_->model_config(), &vrnn_->perturbation_config());
    }
    cfg_.write(kv);
    kv.set("step", step_);
    kv.set("epoch", epoch_);
    kv.set("metrics.epoch_loss", join_numbers(epoch_loss_));
    const torch::nn::Module& m = rnn_ ? static_cast<const torch::nn::Module&>(*rnn_) : *vrnn_;
    save_parameters(m, tmp, kv);
    fs::create_directories(tmp / "optimizer");
    const auto& state = optimizer_->state();
    std::int64_t n_state = 0;
    for (const auto& item : m.named_parameters()) {
      auto it = state.find(item.value().unsafeGetTensorImpl());
      if (it == state.end()) continue;
      const auto& s = static_cast<const torch::optim::AdamWParamState&>(*it->second);
      const auto key = "optimizer." + std::to_string(n_state);
      kv.set(key + ".name", item.key());
      kv.set(key + ".step", static_cast<std::int64_t>(s.step()));
      write_tensor(tmp / "optimizer" / (item.key() + ".exp_avg.f32"), s.exp_avg());
      write_tensor(tmp / "optimizer" / (item.key() + ".exp_avg_sq.f32"), s.exp_avg_sq());
      ++n_state;
    }
    kv.set("optimizer.count", n_state);
    kv.write(tmp / "manifest.txt");
  });
}

void Trainer::load(const fs::path& dir) {
  auto info = read_checkpoint_info(dir);
  const auto expected = rnn_ ? ModelKind::kSwinRNN : ModelKind::kSwinVRNN;
  if (info.kind != expected || !info.manifest.contains("step")) {
    throw PreconditionError(dir.string() + " is not a phase-" + std::to_string(cfg_.phase) + " training checkpoint");
  }
  load_parameters(module(), dir);
  step_ = info.manifest.get_int("step");
  epoch_ = info.manifest.get_int("epoch");
  epoch_loss_ = info.manifest.get_doubles("metrics.epoch_loss");
  build_optimizer();
  std::map<std::string, torch::Tensor> by_name;
  for (const auto& item : module().named_parameters()) by_name[item.key()] = item.value();
  auto& state = optimizer_->state();
  const auto count = info.manifest.get_int("optimizer.count");
  for (std::int64_t i = 0; i < count; ++i) {
    const auto key = "optimizer." + std::to_string(i);
    const auto& name = info.manifest.at(key + ".name");
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CatalogMismatch("optimizer state for unknown parameter '" + name + "'");
    const auto shape = it->second.sizes().vec();
    auto s = std::make_unique<torch::optim::AdamWParamState>();
    s->step(info.manifest.get_int(key + ".step"));
    s->exp_avg(read_tensor(dir / "optimizer" / (name + ".exp_avg.f32"), shape));
    s->exp_avg_sq(read_tensor(dir / "optimizer" / (name + ".exp_avg_sq.f32"), shape));
    state[it->second.unsafeGetTensorImpl()] = std::move(s);
  }
}

double posterior_pair_kl(SwinVRNN model, const torch::Tensor& history, const torch::Tensor& next_a,
                         const torch::Tensor& next_b) {
  torch::NoGradGuard guard;
  auto pyramid = model->backbone->encode(history);
  const auto& h = pyramid[static_cast<std::size_t>(model->perturbation_config().latent_scale)];
  auto qa = model->posterior->forward(next_a, h);
  auto qb = model->posterior->forward(next_b, h);
  return kl_divergence(qa, qb).mean().item<double>();
}

}  // namespace swinvrnn
