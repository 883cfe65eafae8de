#include "swinvrnn/perturbation.hpp"

#include <cmath>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

namespace F = torch::nn::functional;

namespace {

// Keeps softplus outputs representable as strictly positive float32.
constexpr double kCholFloor = 1e-6;

}  // namespace

void LatentDistribution::validate() const {
  if (!mean.defined() || !chol.defined()) throw InvalidDistribution("latent distribution is empty");
  if (mean.dim() < 2 || chol.dim() != mean.dim() + 1 || chol.size(-1) != mean.size(-1) ||
      chol.size(-2) != mean.size(-1) ||
      chol.sizes().slice(0, chol.dim() - 2) != mean.sizes().slice(0, mean.dim() - 1)) {
    throw InvalidDistribution("mean and chol shapes disagree");
  }
  auto diag = chol.diagonal(0, -2, -1);
  if (!(diag > 0).all().item<bool>()) throw InvalidDistribution("Cholesky factor has a non-positive diagonal entry");
}

torch::Tensor sample_latent(const LatentDistribution& dist, const torch::Tensor& eps) {
  if (eps.sizes() != dist.mean.sizes()) throw ShapeError("latent noise must match the mean's shape");
  return dist.mean + torch::matmul(dist.chol, eps.unsqueeze(-1)).squeeze(-1);
}

torch::Tensor kl_divergence(const LatentDistribution& q, const LatentDistribution& p) {
  q.validate();
  p.validate();
  if (q.mean.sizes() != p.mean.sizes()) throw InvalidDistribution("KL needs distributions of identical shape");
  const auto k = static_cast<double>(q.sites());
  auto m = torch::linalg_solve_triangular(p.chol, q.chol, /*upper=*/false);
  auto trace = m.pow(2).sum({-2, -1});
  auto v = torch::linalg_solve_triangular(p.chol, (p.mean - q.mean).unsqueeze(-1), /*upper=*/false);
  auto quad = v.pow(2).sum({-2, -1});
  auto logdet_p = 2.0 * p.chol.diagonal(0, -2, -1).log().sum(-1);
  auto logdet_q = 2.0 * q.chol.diagonal(0, -2, -1).log().sum(-1);
  return (0.5 * (trace + quad - k + logdet_p - logdet_q)).sum(-1);
}

double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

void PerturbationConfig::validate(const ModelConfig& model) const {
  if (beta < 0.0) throw ConfigError("perturbation.beta must be non-negative");
  if (latent_scale < 0 || latent_scale >= model.n_scales()) {
    throw ConfigError("perturbation.latent_scale must name one of the model's " + std::to_string(model.n_scales()) +
                      " scales");
  }
  if (latent_channels < 1) throw ConfigError("perturbation.latent_channels must be positive");
  if (ramp_fraction < 0.0 || ramp_fraction > 1.0) throw ConfigError("perturbation.ramp_fraction must lie in [0, 1]");
}

void PerturbationConfig::write(KeyValueText& kv, const std::string& prefix) const {
  kv.set(prefix + "beta", beta);
  kv.set(prefix + "latent_scale", latent_scale);
  kv.set(prefix + "latent_channels", latent_channels);
  kv.set(prefix + "ramp_fraction", ramp_fraction);
  kv.set(prefix + "diagonal_only", diagonal_only);
}

PerturbationConfig PerturbationConfig::read(const KeyValueText& kv, const std::string& prefix) {
  PerturbationConfig cfg;
  if (kv.contains(prefix + "beta")) cfg.beta = kv.get_double(prefix + "beta");
  if (kv.contains(prefix + "latent_scale")) cfg.latent_scale = kv.get_int(prefix + "latent_scale");
  if (kv.contains(prefix + "latent_channels")) cfg.latent_channels = kv.get_int(prefix + "latent_channels");
  if (kv.contains(prefix + "ramp_fraction")) cfg.ramp_fraction = kv.get_double(prefix + "ramp_fraction");
  if (kv.contains(prefix + "diagonal_only")) cfg.diagonal_only = kv.get_bool(prefix + "diagonal_only");
  return cfg;
}

double ramp_multiplier(std::int64_t step, std::int64_t ramp_steps) {
  if (ramp_steps <= 0) return 1.0;
  return std::clamp(static_cast<double>(step) / static_cast<double>(ramp_steps), 0.0, 1.0);
}

LatentNetImpl::LatentNetImpl(const ModelConfig& model, const PerturbationConfig& cfg, double diag_offset)
    : c_z_(cfg.latent_channels),
      sites_(model.scale_height(cfg.latent_scale) * model.scale_width(cfg.latent_scale)),
      diag_offset_(diag_offset),
      diagonal_only_(cfg.diagonal_only) {
  const auto s = cfg.latent_scale;
  const auto dim = model.stage_dims[s];
  embed = register_module("embed", ScaleEmbed(model.n_out, dim, s));
  fuse = register_module("fuse", torch::nn::Linear(2 * dim, dim));
  init_linear(fuse);
  SwinBlockConfig b;
  b.dim = dim;
  b.n_heads = default_heads(dim);
  b.window = model.window;
  b.mlp_ratio = model.mlp_ratio;
  b.longitude_cyclic = model.longitude_cyclic;
  b.height = model.scale_height(s);
  b.width = model.scale_width(s);
  block = register_module("block", SwinBlock(b));
  mean_head = register_module("mean_head", torch::nn::Linear(dim, c_z_));
  chol_head = register_module("chol_head", torch::nn::Linear(dim, c_z_ * sites_));
  zero_heads();
}

void LatentNetImpl::zero_heads() {
  torch::NoGradGuard guard;
  for (auto* l : {&mean_head, &chol_head}) {
    (*l)->weight.zero_();
    (*l)->bias.zero_();
  }
}

LatentDistribution LatentNetImpl::forward(const torch::Tensor& x, const torch::Tensor& h) {
  auto f = block->forward(apply_linear(*fuse, torch::cat({embed->forward(x), h}, -1)));
  const auto b = f.size(0);
  auto tokens = f.reshape({b, sites_, f.size(-1)});
  LatentDistribution dist;
  dist.mean = apply_linear(*mean_head, tokens).transpose(1, 2);
  // Token i emits row i of every channel's factor.
  auto raw = apply_linear(*chol_head, tokens).view({b, sites_, c_z_, sites_}).permute({0, 2, 1, 3});
  auto diag = F::softplus(raw.diagonal(0, -2, -1) + diag_offset_) + kCholFloor;
  dist.chol = torch::diag_embed(diag);
  if (!diagonal_only_) dist.chol = dist.chol + raw.tril(-1);
  return dist;
}

LatentInjectorImpl::LatentInjectorImpl(const ModelConfig& model, const PerturbationConfig& cfg)
    : c_z_(cfg.latent_channels),
      h_z_(model.scale_height(cfg.latent_scale)),
      w_z_(model.scale_width(cfg.latent_scale)) {
  projections = register_module("projections", torch::nn::ModuleList());
  for (std::int64_t s = 0; s < model.n_scales(); ++s) {
    torch::nn::Linear proj(torch::nn::LinearOptions(c_z_, model.stage_dims[s]).bias(false));
    init_linear(proj);
    projections->push_back(proj);
  }
}

HiddenStatePyramid LatentInjectorImpl::forward(const HiddenStatePyramid& pyramid, const torch::Tensor& z, double ramp) {
  if (ramp == 0.0) return pyramid;
  if (z.dim() != 3 || z.size(1) != c_z_ || z.size(2) != h_z_ * w_z_) {
    throw ShapeError("latent must be [B, " + std::to_string(c_z_) + ", " + std::to_string(h_z_ * w_z_) + "]");
  }
  auto zmap = z.reshape({z.size(0), c_z_, h_z_, w_z_});
  HiddenStatePyramid out;
  out.reserve(pyramid.size());
  for (std::size_t s = 0; s < pyramid.size(); ++s) {
    const auto& h = pyramid[s];
    auto resized = F::interpolate(zmap, F::InterpolateFuncOptions()
                                            .size(std::vector<std::int64_t>{h.size(1), h.size(2)})
                                            .mode(torch::kNearest))
                       .permute({0, 2, 3, 1});
    out.push_back(h + ramp * apply_linear(*projections[s]->as<torch::nn::LinearImpl>(), resized));
  }
  return out;
}

const char* to_string(LatentSource source) {
  switch (source) {
    case LatentSource::kNone:
      return "none";
    case LatentSource::kPosterior:
      return "posterior";
    case LatentSource::kPrior:
      return "prior";
  }
  return "?";
}

SwinVRNNImpl::SwinVRNNImpl(const ModelConfig& model, const PerturbationConfig& cfg) : cfg_(cfg) {
  cfg_.validate(model);
  backbone = register_module("backbone", SwinRNN(model));
  posterior = register_module("posterior", LatentNet(model, cfg_, 0.0));
  prior = register_module("prior", LatentNet(model, cfg_, inverse_softplus(1.0)));
  injector = register_module("injector", LatentInjector(model, cfg_));
}

std::vector<torch::Tensor> SwinVRNNImpl::perturbation_parameters() {
  std::vector<torch::Tensor> out;
  for (auto* m : std::initializer_list<torch::nn::Module*>{posterior.get(), prior.get(), injector.get()}) {
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

VrnnRollout SwinVRNNImpl::rollout(const torch::Tensor& history, const VrnnOptions& options) {
  VrnnRollout result;
  auto opts = options.base;
  const auto source = options.source.value_or(sampling_source());
  if (source != LatentSource::kNone) {
    if (!opts.streams) throw PreconditionError("latent sampling requires noise streams");
    if (source == LatentSource::kPosterior && !opts.targets.defined()) {
      throw PreconditionError("posterior sampling requires target frames");
    }
    const auto scale = static_cast<std::size_t>(cfg_.latent_scale);
    const auto c_z = cfg_.latent_channels;
    opts.perturber = [&, scale, c_z, source](std::int64_t step, const torch::Tensor& x_t, const HiddenStatePyramid& pyramid,
                                     const torch::Tensor& x_next) {
      const auto& h = pyramid[scale];
      LatentDistribution dist;
      if (source == LatentSource::kPosterior) {
        dist = posterior->forward(x_next, h);
        if (options.compute_kl) result.kl.push_back(kl_divergence(dist, prior->forward(x_t, h)));
      } else {
        dist = prior->forward(x_t, h);
      }
      check_finite(dist.mean, step, "latent mean");
      check_finite(dist.chol, step, "latent Cholesky factor");
      if (options.transform) dist = options.transform(step, dist);
      if (options.on_latent) options.on_latent(step, dist);
      auto eps = opts.streams->normal(NoiseTag::kLatent, step, {c_z, dist.sites()}, dist.mean.scalar_type());
      result.sources.push_back(source);
      return injector->forward(pyramid, sample_latent(dist, eps), options.ramp);
    };
  }
  result.forecast = backbone->rollout(history, opts);
  if (source == LatentSource::kNone) result.sources.assign(static_cast<std::size_t>(opts.n_steps), LatentSource::kNone);
  return result;
}

}  // namespace swinvrnn
