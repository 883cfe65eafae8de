#include "swinvrnn/ensemble.hpp"

#include <cstdio>
#include <numeric>

#include "swinvrnn/errors.hpp"
#include "swinvrnn/noise.hpp"
#include "swinvrnn/tensor_io.hpp"
#include "swinvrnn/training.hpp"

namespace swinvrnn {

namespace fs = std::filesystem;

const char* to_string(EnsembleMethod method) {
  switch (method) {
    case EnsembleMethod::kFixed:
      return "fixed-distribution";
    case EnsembleMethod::kMcDropout:
      return "mc-dropout";
    case EnsembleMethod::kLearned:
      return "learned-distribution";
    case EnsembleMethod::kMultiModel:
      return "multi-model";
    case EnsembleMethod::kControl:
      return "control";
  }
  return "?";
}

EnsembleMethod parse_ensemble_method(const std::string& text) {
  if (text == "fixed-distribution" || text == "fixed") return EnsembleMethod::kFixed;
  if (text == "mc-dropout") return EnsembleMethod::kMcDropout;
  if (text == "learned-distribution" || text == "learned") return EnsembleMethod::kLearned;
  if (text == "multi-model") return EnsembleMethod::kMultiModel;
  if (text == "control") return EnsembleMethod::kControl;
  throw ConfigError("unknown ensemble method '" + text +
                    "' (expected fixed-distribution, mc-dropout, learned-distribution, multi-model or control)");
}

void EnsembleConfig::validate() const {
  if (n_members < 1) throw ConfigError("ensemble.n_members must be at least 1");
  if (sigma < 0.0) throw ConfigError("ensemble.sigma must be non-negative");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("ensemble.dropout_rate must lie in [0, 1)");
  if (n_steps < 0) throw ConfigError("ensemble.n_steps must be non-negative");
  if (member_batch < 0) throw ConfigError("ensemble.member_batch must be non-negative");
  if (method == EnsembleMethod::kMultiModel && checkpoints.size() < 2) {
    throw ConfigError("ensemble.checkpoints: multi-model needs at least 2 checkpoints, got " +
                      std::to_string(checkpoints.size()));
  }
}

void EnsembleConfig::write(KeyValueText& kv, const std::string& prefix) const {
  kv.set(prefix + "method", to_string(method));
  kv.set(prefix + "n_members", n_members);
  kv.set(prefix + "sigma", sigma);
  kv.set(prefix + "dropout_rate", dropout_rate);
  std::string list;
  for (const auto& c : checkpoints) list += (list.empty() ? "" : ",") + c.string();
  kv.set(prefix + "checkpoints", list);
  kv.set(prefix + "seed", static_cast<std::int64_t>(seed));
  kv.set(prefix + "n_steps", n_steps);
  kv.set(prefix + "member_batch", member_batch);
}

EnsembleConfig EnsembleConfig::read(const KeyValueText& kv, const std::string& prefix) {
  EnsembleConfig cfg;
  if (auto v = kv.find(prefix + "method")) cfg.method = parse_ensemble_method(*v);
  if (kv.contains(prefix + "n_members")) cfg.n_members = kv.get_int(prefix + "n_members");
  if (kv.contains(prefix + "sigma")) cfg.sigma = kv.get_double(prefix + "sigma");
  if (kv.contains(prefix + "dropout_rate")) cfg.dropout_rate = kv.get_double(prefix + "dropout_rate");
  if (auto v = kv.find(prefix + "checkpoints")) {
    for (const auto& item : split_list(*v)) {
      if (!item.empty()) cfg.checkpoints.emplace_back(item);
    }
  }
  if (kv.contains(prefix + "seed")) cfg.seed = static_cast<std::uint64_t>(kv.get_int(prefix + "seed"));
  if (kv.contains(prefix + "n_steps")) cfg.n_steps = kv.get_int(prefix + "n_steps");
  if (kv.contains(prefix + "member_batch")) cfg.member_batch = kv.get_int(prefix + "member_batch");
  return cfg;
}

torch::Tensor ensemble_mean(const torch::Tensor& members) {
  if (!members.defined() || members.dim() < 1 || members.size(0) < 1) {
    throw PreconditionError("ensemble mean needs at least one member");
  }
  return members.to(torch::kFloat64).mean(0).to(members.scalar_type());
}

torch::Tensor ensemble_mean(const EnsembleForecast& forecast) { return ensemble_mean(forecast.members); }

namespace {

torch::Tensor single_history(const torch::Tensor& history, const ModelConfig& cfg) {
  auto h = history.dim() == 4 ? history.unsqueeze(0) : history;
  if (h.dim() != 5 || h.size(0) != 1) throw ShapeError("ensemble history must be [n_in, t_hist, H, W]");
  if (h.size(1) != cfg.n_in || h.size(2) != cfg.t_hist || h.size(3) != cfg.height || h.size(4) != cfg.width) {
    throw ShapeError("ensemble history has shape " + shape_text(history.sizes()) + ", model expects " +
                     std::to_string(cfg.n_in) + "x" + std::to_string(cfg.t_hist) + "x" + std::to_string(cfg.height) +
                     "x" + std::to_string(cfg.width));
  }
  return h;
}

std::int64_t lead_steps(const EnsembleConfig& cfg, const ModelConfig& model) {
  return cfg.n_steps > 0 ? cfg.n_steps : model.t_pred;
}

// Runs members [first, first + count) in chunks; `run` maps a replicated
// history batch and its noise streams to [b, n_out, T, H, W].
template <class Run>
torch::Tensor run_members(const torch::Tensor& history, std::int64_t first, std::int64_t count,
                          const EnsembleConfig& cfg, Run run) {
  torch::NoGradGuard guard;
  const auto chunk = cfg.member_batch > 0 ? cfg.member_batch : count;
  std::vector<torch::Tensor> parts;
  for (std::int64_t lo = 0; lo < count; lo += chunk) {
    const auto n = std::min(chunk, count - lo);
    std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), first + lo);
    NoiseStreams streams(cfg.seed, std::move(ids));
    parts.push_back(run(history.expand({n, -1, -1, -1, -1}).contiguous(), streams));
  }
  return torch::cat(parts, 0);
}

EnsembleForecast assemble(EnsembleMethod method, torch::Tensor members, const std::string& model_id,
                          std::uint64_t seed, std::int64_t first = 0) {
  EnsembleForecast out;
  out.method = method;
  out.mean = ensemble_mean(members);
  for (std::int64_t m = 0; m < members.size(0); ++m) out.provenance.push_back({model_id, seed, first + m});
  out.members = std::move(members);
  return out;
}

}  // namespace

torch::Tensor control_forecast(SwinRNN model, const torch::Tensor& history, std::int64_t n_steps) {
  torch::NoGradGuard guard;
  model->eval();
  return model->rollout(single_history(history, model->config()), n_steps).squeeze(0);
}

EnsembleForecast forecast_control(SwinRNN model, const torch::Tensor& history, std::int64_t n_steps,
                                  const std::string& model_id) {
  auto member = control_forecast(model, history, n_steps > 0 ? n_steps : model->config().t_pred);
  return assemble(EnsembleMethod::kControl, member.unsqueeze(0), model_id, 0);
}

EnsembleForecast forecast_fixed(SwinRNN model, const torch::Tensor& history, const EnsembleConfig& cfg,
                                const std::string& model_id) {
  cfg.validate();
  model->eval();
  auto h = single_history(history, model->config());
  RolloutOptions opt;
  opt.n_steps = lead_steps(cfg, model->config());
  opt.input_noise_sigma = cfg.sigma;
  auto members = run_members(h, 0, cfg.n_members, cfg, [&](const torch::Tensor& batch, const NoiseStreams& streams) {
    auto o = opt;
    o.streams = &streams;
    return model->rollout(batch, o);
  });
  return assemble(EnsembleMethod::kFixed, std::move(members), model_id, cfg.seed);
}

EnsembleForecast forecast_mc_dropout(SwinRNN model, const torch::Tensor& history, const EnsembleConfig& cfg,
                                     const std::string& model_id) {
  cfg.validate();
  if (model->config().dropout_rate <= 0.0) {
    throw ConfigError("mc-dropout needs a model trained with dropout (model.dropout_rate is 0)");
  }
  model->eval();
  auto h = single_history(history, model->config());
  RolloutOptions opt;
  opt.n_steps = lead_steps(cfg, model->config());
  opt.dropout = true;
  opt.dropout_rate = cfg.dropout_rate;
  auto members = run_members(h, 0, cfg.n_members, cfg, [&](const torch::Tensor& batch, const NoiseStreams& streams) {
    auto o = opt;
    o.streams = &streams;
    return model->rollout(batch, o);
  });
  return assemble(EnsembleMethod::kMcDropout, std::move(members), model_id, cfg.seed);
}

namespace {

torch::Tensor learned_members(SwinVRNN model, const torch::Tensor& history, const EnsembleConfig& cfg,
                              std::int64_t first, const LatentTransform& transform) {
  model->eval();
  auto h = single_history(history, model->model_config());
  VrnnOptions opt;
  opt.base.n_steps = lead_steps(cfg, model->model_config());
  opt.source = LatentSource::kPrior;
  opt.transform = transform;
  return run_members(h, first, cfg.n_members, cfg, [&](const torch::Tensor& batch, const NoiseStreams& streams) {
    auto o = opt;
    o.base.streams = &streams;
    return model->rollout(batch, o).forecast;
  });
}

void check_compatible(const ModelConfig& a, const ModelConfig& b, const std::string& id) {
  if (a.n_in != b.n_in || a.n_out != b.n_out || a.height != b.height || a.width != b.width ||
      a.t_hist != b.t_hist) {
    throw ConfigError("model '" + id + "' has a different grid or catalog (" + std::to_string(b.n_in) + " inputs, " +
                      std::to_string(b.height) + "x" + std::to_string(b.width) + ") than the first model (" +
                      std::to_string(a.n_in) + " inputs, " + std::to_string(a.height) + "x" +
                      std::to_string(a.width) + ")");
  }
}

}  // namespace

EnsembleForecast forecast_learned(SwinVRNN model, const torch::Tensor& history, const EnsembleConfig& cfg,
                                  const std::string& model_id, const LatentTransform& transform) {
  cfg.validate();
  return assemble(EnsembleMethod::kLearned, learned_members(model, history, cfg, 0, transform), model_id, cfg.seed);
}

EnsembleForecast forecast_multi_model(const std::vector<SwinVRNN>& models, const std::vector<std::string>& model_ids,
                                      const torch::Tensor& history, const EnsembleConfig& cfg) {
  if (models.empty()) throw ConfigError("multi-model ensemble needs at least one model");
  if (model_ids.size() != models.size()) throw PreconditionError("one model id per model is required");
  auto single = cfg;
  single.method = EnsembleMethod::kLearned;
  single.validate();
  for (std::size_t i = 1; i < models.size(); ++i) {
    check_compatible(models[0]->model_config(), models[i]->model_config(), model_ids[i]);
  }
  std::vector<torch::Tensor> parts;
  EnsembleForecast out;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto first = static_cast<std::int64_t>(i) * cfg.n_members;
    parts.push_back(learned_members(models[i], history, single, first, {}));
    for (std::int64_t m = 0; m < cfg.n_members; ++m) out.provenance.push_back({model_ids[i], cfg.seed, first + m});
  }
  out.method = models.size() == 1 ? EnsembleMethod::kLearned : EnsembleMethod::kMultiModel;
  out.members = torch::cat(parts, 0);
  out.mean = ensemble_mean(out.members);
  return out;
}

EnsembleForecast forecast_multi_model(const torch::Tensor& history, const EnsembleConfig& cfg) {
  auto c = cfg;
  c.method = EnsembleMethod::kMultiModel;
  c.validate();
  std::vector<SwinVRNN> models;
  std::vector<std::string> ids;
  for (const auto& path : cfg.checkpoints) {
    auto info = read_checkpoint_info(path);
    if (info.kind != ModelKind::kSwinVRNN) {
      throw ConfigError("multi-model needs SwinVRNN checkpoints; " + path.string() + " holds a phase-1 SwinRNN");
    }
    if (!models.empty()) check_compatible(models.front()->model_config(), info.model, path.string());
    models.push_back(load_swinvrnn(path));
    ids.push_back(path.string());
  }
  return forecast_multi_model(models, ids, history, c);
}

namespace {

std::string member_file(std::int64_t m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "member_%03lld.f32", static_cast<long long>(m));
  return buf;
}

}  // namespace

void write_ensemble(const EnsembleForecast& forecast, const fs::path& dir, const KeyValueText& extra) {
  if (!forecast.members.defined() || forecast.members.dim() != 5) {
    throw ShapeError("ensemble members must be [M, n_out, T, H, W]");
  }
  if (static_cast<std::int64_t>(forecast.provenance.size()) != forecast.n_members()) {
    throw PreconditionError("ensemble provenance must list every member");
  }
  fs::create_directories(dir);
  KeyValueText kv;
  kv.set("format", kEnsembleFormat);
  kv.set("method", to_string(forecast.method));
  kv.set("n_members", forecast.n_members());
  kv.set("member_shape", shape_text(forecast.members.sizes().slice(1)));
  kv.set("units", "normalized");
  for (std::int64_t m = 0; m < forecast.n_members(); ++m) {
    const auto key = "member." + std::to_string(m);
    const auto& p = forecast.provenance[static_cast<std::size_t>(m)];
    kv.set(key + ".model", p.model_id);
    kv.set(key + ".seed", static_cast<std::int64_t>(p.seed));
    kv.set(key + ".stream", p.member);
    write_tensor(dir / member_file(m), forecast.members[m]);
  }
  write_tensor(dir / "mean.f32", forecast.mean);
  kv.merge(extra);
  kv.write(dir / "manifest.txt");
}

EnsembleForecast read_ensemble(const fs::path& dir, KeyValueText* manifest) {
  if (!fs::exists(dir / "manifest.txt")) throw PreconditionError("no ensemble artifact at " + dir.string());
  auto kv = KeyValueText::read(dir / "manifest.txt");
  if (kv.at("format") != kEnsembleFormat) {
    throw IoError(dir.string() + " has format '" + kv.at("format") + "', expected " + kEnsembleFormat);
  }
  EnsembleForecast out;
  out.method = parse_ensemble_method(kv.at("method"));
  const auto n = kv.get_int("n_members");
  if (n < 1) throw PreconditionError("ensemble artifact " + dir.string() + " lists no members");
  const auto shape = parse_shape(kv.at("member_shape"));
  std::vector<torch::Tensor> members;
  for (std::int64_t m = 0; m < n; ++m) {
    const auto key = "member." + std::to_string(m);
    out.provenance.push_back({kv.at(key + ".model"), static_cast<std::uint64_t>(kv.get_int(key + ".seed")),
                              kv.get_int(key + ".stream")});
    members.push_back(read_tensor(dir / member_file(m), shape));
  }
  out.members = torch::stack(members);
  out.mean = read_tensor(dir / "mean.f32", shape);
  if (manifest) *manifest = std::move(kv);
  return out;
}

}  // namespace swinvrnn
