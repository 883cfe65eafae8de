#include "swinvrnn/backbone.hpp"

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

namespace F = torch::nn::functional;

const char* to_string(DecoderKind kind) { return kind == DecoderKind::kSwin ? "swin" : "gated"; }

DecoderKind parse_decoder_kind(const std::string& text) {
  if (text == "swin") return DecoderKind::kSwin;
  if (text == "gated") return DecoderKind::kGated;
  throw ConfigError("unknown decoder kind '" + text + "' (expected swin or gated)");
}

void ModelConfig::validate() const {
  if (n_out < 1 || n_in < n_out) throw ConfigError("model needs 1 <= n_out <= n_in");
  if (t_hist < 1 || t_pred < 1) throw ConfigError("t_hist and t_pred must be positive");
  for (auto d : stage_dims) {
    if (d < 1) throw ConfigError("stage_dims must be positive");
  }
  if (base_dim != stage_dims[0]) throw ConfigError("model.base_dim must equal model.stage_dims[0]");
  if (decoder_depth < 1) throw ConfigError("model.decoder_depth must be at least 1");
  if (window < 1) throw ConfigError("model.window must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("model.dropout_rate must lie in [0, 1)");
  if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
    throw GeometryError("grid " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not divisible by 8 for the four-scale encoder");
  }
}

void ModelConfig::write(KeyValueText& kv, const std::string& prefix) const {
  kv.set(prefix + "n_in", n_in);
  kv.set(prefix + "n_out", n_out);
  kv.set(prefix + "t_hist", t_hist);
  kv.set(prefix + "t_pred", t_pred);
  kv.set(prefix + "height", height);
  kv.set(prefix + "width", width);
  kv.set(prefix + "base_dim", base_dim);
  kv.set(prefix + "stage_dims", join_numbers({static_cast<double>(stage_dims[0]), static_cast<double>(stage_dims[1]),
                                              static_cast<double>(stage_dims[2]), static_cast<double>(stage_dims[3])}));
  kv.set(prefix + "decoder_depth", decoder_depth);
  kv.set(prefix + "window", window);
  kv.set(prefix + "mlp_ratio", mlp_ratio);
  kv.set(prefix + "longitude_cyclic", longitude_cyclic);
  kv.set(prefix + "residual", residual);
  kv.set(prefix + "multi_scale", multi_scale);
  kv.set(prefix + "decoder", to_string(decoder));
  kv.set(prefix + "dropout_rate", dropout_rate);
  kv.set(prefix + "zero_init_predictor", zero_init_predictor);
}

ModelConfig ModelConfig::read(const KeyValueText& kv, const std::string& prefix) {
  ModelConfig cfg;
  auto opt_int = [&](const char* key, std::int64_t& out) {
    if (kv.contains(prefix + key)) out = kv.get_int(prefix + key);
  };
  auto opt_bool = [&](const char* key, bool& out) {
    if (kv.contains(prefix + key)) out = kv.get_bool(prefix + key);
  };
  opt_int("n_in", cfg.n_in);
  opt_int("n_out", cfg.n_out);
  opt_int("t_hist", cfg.t_hist);
  opt_int("t_pred", cfg.t_pred);
  opt_int("height", cfg.height);
  opt_int("width", cfg.width);
  opt_int("decoder_depth", cfg.decoder_depth);
  opt_int("window", cfg.window);
  if (kv.contains(prefix + "stage_dims")) {
    auto dims = kv.get_doubles(prefix + "stage_dims");
    if (dims.size() != 4) throw ConfigError(prefix + "stage_dims needs exactly four widths");
    for (std::size_t i = 0; i < 4; ++i) cfg.stage_dims[i] = static_cast<std::int64_t>(dims[i]);
    cfg.base_dim = cfg.stage_dims[0];
  }
  opt_int("base_dim", cfg.base_dim);
  if (kv.contains(prefix + "mlp_ratio")) cfg.mlp_ratio = kv.get_double(prefix + "mlp_ratio");
  if (kv.contains(prefix + "dropout_rate")) cfg.dropout_rate = kv.get_double(prefix + "dropout_rate");
  if (kv.contains(prefix + "decoder")) cfg.decoder = parse_decoder_kind(kv.at(prefix + "decoder"));
  opt_bool("longitude_cyclic", cfg.longitude_cyclic);
  opt_bool("residual", cfg.residual);
  opt_bool("multi_scale", cfg.multi_scale);
  opt_bool("zero_init_predictor", cfg.zero_init_predictor);
  return cfg;
}

CubeEmbedImpl::CubeEmbedImpl(std::int64_t n_in, std::int64_t t_hist, std::int64_t dim) : n_in_(n_in), t_hist_(t_hist) {
  proj = register_module("proj", torch::nn::Linear(n_in * t_hist, dim));
}

torch::Tensor CubeEmbedImpl::forward(const torch::Tensor& history) {
  if (history.dim() != 5 || history.size(1) != n_in_ || history.size(2) != t_hist_) {
    throw ShapeError("cube embedding expects [B, " + std::to_string(n_in_) + ", " + std::to_string(t_hist_) +
                     ", H, W]");
  }
  auto cube = history.permute({0, 3, 4, 1, 2}).reshape({history.size(0), history.size(3), history.size(4), -1});
  return apply_linear(*proj, cube);
}

namespace {

SwinBlockConfig block_at(const ModelConfig& cfg, std::int64_t scale, std::int64_t index) {
  SwinBlockConfig b;
  b.dim = cfg.stage_dims[scale];
  b.n_heads = default_heads(b.dim);
  b.window = cfg.window;
  b.shift = index % 2 == 1 ? cfg.window / 2 : 0;
  b.mlp_ratio = cfg.mlp_ratio;
  b.longitude_cyclic = cfg.longitude_cyclic;
  b.height = cfg.scale_height(scale);
  b.width = cfg.scale_width(scale);
  return b;
}

torch::Tensor run_blocks(torch::nn::ModuleList& blocks, torch::Tensor x) {
  for (const auto& m : *blocks) x = m->as<SwinBlockImpl>()->forward(x);
  return x;
}

// Zero rows at the poles, wrap-around columns in longitude.
torch::Tensor pad_sphere(const torch::Tensor& x_chw) {
  auto wrapped = torch::cat({x_chw.narrow(3, x_chw.size(3) - 1, 1), x_chw, x_chw.narrow(3, 0, 1)}, 3);
  return F::pad(wrapped, F::PadFuncOptions({0, 0, 1, 1}));
}

// 3x3 convolution over the sphere-padded grid: [B, C, H, W] -> [B, H, W, out].
torch::Tensor sphere_conv3x3(torch::nn::Linear& proj, const torch::Tensor& x_chw) {
  const auto b = x_chw.size(0), h = x_chw.size(2), w = x_chw.size(3);
  auto cols = F::unfold(pad_sphere(x_chw), F::UnfoldFuncOptions(3));
  return apply_linear(*proj, cols.transpose(1, 2).reshape({b, h, w, -1}));
}

torch::Tensor upsample_nearest(const torch::Tensor& h, std::int64_t factor) {
  if (factor == 1) return h;
  return h.repeat_interleave(factor, 1).repeat_interleave(factor, 2);
}

}  // namespace

EncoderImpl::EncoderImpl(const ModelConfig& cfg) : n_scales_(cfg.n_scales()) {
  stages = register_module("stages", torch::nn::ModuleList());
  merges = register_module("merges", torch::nn::ModuleList());
  for (std::int64_t s = 0; s < n_scales_; ++s) {
    torch::nn::ModuleList stage;
    for (std::int64_t i = 0; i < 2; ++i) stage->push_back(SwinBlock(block_at(cfg, s, i)));
    stages->push_back(stage);
    if (s + 1 < n_scales_) merges->push_back(PatchMerging(cfg.stage_dims[s], cfg.stage_dims[s + 1]));
  }
}

HiddenStatePyramid EncoderImpl::forward(const torch::Tensor& tokens) {
  HiddenStatePyramid pyramid;
  auto x = tokens;
  for (std::int64_t s = 0; s < n_scales_; ++s) {
    for (const auto& m : *stages[s]->as<torch::nn::ModuleListImpl>()) x = m->as<SwinBlockImpl>()->forward(x);
    pyramid.push_back(x);
    if (s + 1 < n_scales_) x = merges[s]->as<PatchMergingImpl>()->forward(x);
  }
  return pyramid;
}

ScaleEmbedImpl::ScaleEmbedImpl(std::int64_t n_out, std::int64_t dim, std::int64_t scale)
    : n_out_(n_out), k_(std::int64_t{1} << scale) {
  proj = register_module("proj", torch::nn::Linear(n_out * k_ * k_, dim));
}

torch::Tensor ScaleEmbedImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != n_out_ || x.size(2) % k_ != 0 || x.size(3) % k_ != 0) {
    throw ShapeError("scale embedding expects [B, " + std::to_string(n_out_) + ", H, W] with H, W divisible by " +
                     std::to_string(k_));
  }
  const auto b = x.size(0), h = x.size(2) / k_, w = x.size(3) / k_;
  // (channel, row, column) patch order, as in a strided convolution kernel.
  auto patches = x.reshape({b, n_out_, h, k_, w, k_}).permute({0, 2, 4, 1, 3, 5}).reshape({b, h, w, -1});
  return apply_linear(*proj, patches);
}

ScaleDecoderImpl::ScaleDecoderImpl(const ModelConfig& cfg, std::int64_t scale)
    : scale_(scale), dim_(cfg.stage_dims[scale]), dropout_rate_(cfg.dropout_rate), kind_(cfg.decoder) {
  embed = register_module("embed", ScaleEmbed(cfg.n_out, dim_, scale));
  if (kind_ == DecoderKind::kSwin) {
    fuse = register_module("fuse", torch::nn::Linear(2 * dim_, dim_));
    init_linear(fuse);
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (std::int64_t i = 0; i < cfg.decoder_depth; ++i) blocks->push_back(SwinBlock(block_at(cfg, scale, i)));
  } else {
    gates = register_module("gates", torch::nn::Linear(2 * dim_ * 9, 2 * dim_));
    candidate = register_module("candidate", torch::nn::Linear(2 * dim_ * 9, dim_));
  }
}

torch::Tensor ScaleDecoderImpl::forward(const torch::Tensor& x_t, const torch::Tensor& h, const StepRandomness& rnd) {
  auto e = embed->forward(x_t);
  auto drop = [&](torch::Tensor y) {
    const double rate = rnd.dropout_rate.value_or(dropout_rate_);
    if (!rnd.dropout || rate == 0.0) return y;
    if (!rnd.streams) throw PreconditionError("dropout requires noise streams");
    auto keep = rnd.streams->uniform(NoiseTag::kDropout, rnd.step, y.sizes().slice(1), torch::kFloat64, scale_)
                    .ge(rate);
    return y * keep.to(y.dtype()) * (1.0 / (1.0 - rate));
  };
  if (kind_ == DecoderKind::kSwin) {
    auto fused = drop(apply_linear(*fuse, torch::cat({e, h}, -1)));
    return run_blocks(blocks, fused);
  }
  auto to_chw = [](const torch::Tensor& t) { return t.permute({0, 3, 1, 2}); };
  auto zr = torch::sigmoid(sphere_conv3x3(gates, to_chw(torch::cat({e, h}, -1))));
  auto z = zr.narrow(-1, 0, dim_);
  auto r = zr.narrow(-1, dim_, dim_);
  auto cand = torch::tanh(sphere_conv3x3(candidate, to_chw(torch::cat({e, r * h}, -1))));
  return drop((1 - z) * h + z * cand);
}

PredictorImpl::PredictorImpl(const ModelConfig& cfg) {
  std::int64_t width = 0;
  for (std::int64_t s = 0; s < cfg.n_scales(); ++s) width += cfg.stage_dims[s];
  proj = register_module("proj", torch::nn::Linear(width, cfg.n_out));
  init_linear(proj);
  if (cfg.zero_init_predictor) zero_init();
}

void PredictorImpl::zero_init() {
  torch::NoGradGuard guard;
  proj->weight.zero_();
  proj->bias.zero_();
}

torch::Tensor PredictorImpl::forward(const HiddenStatePyramid& pyramid) {
  std::vector<torch::Tensor> parts;
  for (std::size_t s = 0; s < pyramid.size(); ++s) parts.push_back(upsample_nearest(pyramid[s], std::int64_t{1} << s));
  return apply_linear(*proj, torch::cat(parts, -1)).permute({0, 3, 1, 2});
}

SwinRNNImpl::SwinRNNImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  cube = register_module("cube", CubeEmbed(cfg.n_in, cfg.t_hist, cfg.base_dim));
  encoder = register_module("encoder", Encoder(cfg));
  decoders = register_module("decoders", torch::nn::ModuleList());
  for (std::int64_t s = 0; s < cfg.n_scales(); ++s) decoders->push_back(ScaleDecoder(cfg, s));
  predictor = register_module("predictor", Predictor(cfg));
}

HiddenStatePyramid SwinRNNImpl::encode(const torch::Tensor& history) {
  if (history.dim() != 5 || history.size(3) != cfg_.height || history.size(4) != cfg_.width) {
    throw GeometryError("history grid does not match the model's " + std::to_string(cfg_.height) + "x" +
                        std::to_string(cfg_.width));
  }
  return encoder->forward(cube->forward(history));
}

HiddenStatePyramid SwinRNNImpl::decoder_step(const torch::Tensor& x_t, const HiddenStatePyramid& pyramid,
                                             const StepRandomness& rnd) {
  if (static_cast<std::int64_t>(pyramid.size()) != cfg_.n_scales()) {
    throw ShapeError("pyramid has " + std::to_string(pyramid.size()) + " scales, model expects " +
                     std::to_string(cfg_.n_scales()));
  }
  HiddenStatePyramid next;
  next.reserve(pyramid.size());
  for (std::size_t s = 0; s < pyramid.size(); ++s) {
    next.push_back(decoders[s]->as<ScaleDecoderImpl>()->forward(x_t, pyramid[s], rnd));
  }
  return next;
}

torch::Tensor last_frame(const torch::Tensor& history, std::int64_t n_out) {
  return history.select(2, history.size(2) - 1).narrow(1, 0, n_out);
}

void check_finite(const torch::Tensor& x, std::int64_t step, const char* what) {
  if (!torch::isfinite(x).all().item<bool>()) {
    throw NumericalDivergence(step, std::string("non-finite ") + what + " at rollout step " + std::to_string(step + 1));
  }
}

torch::Tensor SwinRNNImpl::rollout(const torch::Tensor& history, std::int64_t n_steps) {
  RolloutOptions opt;
  opt.n_steps = n_steps;
  return rollout(history, opt);
}

torch::Tensor SwinRNNImpl::rollout(const torch::Tensor& history, const RolloutOptions& opt) {
  if (opt.n_steps < 1) throw PreconditionError("rollout needs at least one step");
  const bool needs_streams = opt.input_noise_sigma > 0.0 || (opt.dropout && opt.dropout_rate.value_or(cfg_.dropout_rate) > 0.0) ||
                             (opt.teacher_ratio > 0.0 && opt.teacher_ratio < 1.0);
  if (needs_streams && !opt.streams) throw PreconditionError("stochastic rollout requires noise streams");
  if (opt.streams && opt.streams->batch() != history.size(0)) {
    throw ShapeError("noise streams cover " + std::to_string(opt.streams->batch()) + " members, batch has " +
                     std::to_string(history.size(0)));
  }
  if (opt.targets.defined()) {
    if (opt.targets.dim() != 5 || opt.targets.size(2) < opt.n_steps || opt.targets.size(1) != cfg_.n_out) {
      throw ShapeError("rollout targets must be [B, n_out, >= n_steps, H, W]");
    }
  } else if (opt.teacher_ratio > 0.0) {
    throw PreconditionError("teacher forcing requires target frames");
  }

  auto x = last_frame(history, cfg_.n_out);
  auto pyramid = encode(history);
  std::vector<torch::Tensor> outputs;
  outputs.reserve(static_cast<std::size_t>(opt.n_steps));
  const auto frame_shape = x.sizes().slice(1).vec();
  for (std::int64_t step = 0; step < opt.n_steps; ++step) {
    auto x_in = x;
    if (opt.input_noise_sigma > 0.0) {
      x_in = x + opt.input_noise_sigma * opt.streams->normal(NoiseTag::kInputNoise, step, frame_shape,
                                                             x.scalar_type());
    }
    torch::Tensor truth;
    if (opt.targets.defined()) truth = opt.targets.select(2, step);
    const auto& state = opt.perturber ? opt.perturber(step, x_in, pyramid, truth) : pyramid;
    pyramid = decoder_step(x_in, state, {opt.streams, step, opt.dropout, opt.dropout_rate});
    auto delta = predictor->forward(pyramid);
    auto x_out = cfg_.residual ? x_in + delta : delta;
    check_finite(x_out, step, "forecast");
    outputs.push_back(x_out);
    if (opt.on_step) opt.on_step({step, x_in, x_out, static_cast<bool>(opt.perturber)});
    x = x_out;
    if (opt.teacher_ratio >= 1.0) {
      x = truth;
    } else if (opt.teacher_ratio > 0.0) {
      auto u = opt.streams->uniform(NoiseTag::kTeacherForcing, step, {1, 1, 1}, torch::kFloat64);
      x = torch::where(u.lt(opt.teacher_ratio), truth, x_out);
    }
  }
  return torch::stack(outputs, 2);
}

}  // namespace swinvrnn
