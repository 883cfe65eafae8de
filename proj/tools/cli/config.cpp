#include "cli/config.hpp"

#include <cstdlib>
#include <set>

#include "swinvrnn/errors.hpp"

namespace swinvrnn::cli {

namespace fs = std::filesystem;

namespace {

void write_train(KeyValueText& kv, const std::string& prefix, const TrainConfig& t) {
  KeyValueText tmp;
  t.write(tmp, prefix);
  // Phase and seed come from train.phase and run.seed.
  for (const auto& [k, v] : tmp.items()) {
    if (k != prefix + "phase" && k != prefix + "seed") kv.set(k, v);
  }
}

void write_ensemble_section(KeyValueText& kv, const EnsembleConfig& e) {
  KeyValueText tmp;
  e.write(tmp);
  for (const auto& [k, v] : tmp.items()) {
    if (k != "ensemble.seed") kv.set(k, v);
  }
}

KeyValueText toy_preset() {
  KeyValueText kv;
  kv.set("run.preset", "toy");
  kv.set("run.seed", 0);
  kv.set("run.out", "runs/toy");

  kv.set("data.source", "toy");
  kv.set("data.name", "toy");
  kv.set("data.archive", "");
  kv.set("data.catalog", "toy");
  kv.set("data.first_year", 2000);
  kv.set("data.last_year", 2000);
  kv.set("data.train_range", "auto");
  kv.set("data.test_range", "auto");
  kv.set("data.test_fraction", 0.2);
  kv.set("data.toy_kind", "stochastic-advection");
  kv.set("data.toy_steps", 2000);
  kv.set("data.toy_seed", 7);
  kv.set("data.toy_history", 2);
  kv.set("data.n_lat", 8);
  kv.set("data.n_lon", 16);
  kv.set("data.window_stride", 8);
  kv.set("data.init_stride", 8);
  kv.set("data.cache", "");

  ModelConfig m;
  m.n_in = 3;
  m.n_out = 2;
  m.t_hist = 2;
  m.t_pred = 6;
  m.height = 8;
  m.width = 16;
  m.base_dim = 16;
  m.stage_dims = {16, 16, 16, 16};
  m.decoder_depth = 1;
  m.window = 4;
  m.mlp_ratio = 2.0;
  m.zero_init_predictor = true;
  m.write(kv);

  PerturbationConfig p;
  p.beta = 1e-4;
  p.latent_scale = 2;
  p.latent_channels = 4;
  p.write(kv);

  TrainConfig t1;
  t1.epochs = 40;
  t1.batch_size = 8;
  t1.lr_backbone = 1e-3;
  t1.lr_perturbation = 1e-3;
  write_train(kv, "phase1.", t1);
  TrainConfig t2 = t1;
  t2.lr_backbone = 1e-4;
  write_train(kv, "phase2.", t2);
  return kv;
}

KeyValueText paper_preset() {
  KeyValueText kv;
  kv.set("run.preset", "paper");
  kv.set("run.seed", 0);
  kv.set("run.out", "runs/paper");

  kv.set("data.source", "archive");
  kv.set("data.name", "weatherbench");
  kv.set("data.archive", "");
  kv.set("data.catalog", "weatherbench");
  kv.set("data.first_year", 1979);
  kv.set("data.last_year", 2018);
  kv.set("data.train_range", "1979-01-01/2015-12-31T18:00");
  kv.set("data.test_range", "2017-01-01/2018-12-31T18:00");
  kv.set("data.test_fraction", 0.2);
  kv.set("data.toy_kind", "stochastic-advection");
  kv.set("data.toy_steps", 2000);
  kv.set("data.toy_seed", 7);
  kv.set("data.toy_history", 6);
  kv.set("data.n_lat", 32);
  kv.set("data.n_lon", 64);
  kv.set("data.window_stride", 1);
  kv.set("data.init_stride", 2);
  kv.set("data.cache", "");

  ModelConfig{}.write(kv);
  PerturbationConfig{}.write(kv);

  TrainConfig t1;
  t1.epochs = 100;
  t1.batch_size = 16;
  t1.lr_backbone = 2e-4;
  t1.lr_perturbation = 2e-4;
  write_train(kv, "phase1.", t1);
  TrainConfig t2 = t1;
  t2.lr_backbone = 2e-5;
  t2.lr_perturbation = 2e-4;
  write_train(kv, "phase2.", t2);
  return kv;
}

void common_tail(KeyValueText& kv, std::int64_t members) {
  kv.set("train.phase", 1);
  kv.set("train.init_checkpoint", "");
  kv.set("forecast.checkpoint", "");
  kv.set("forecast.n_inits", 0);
  kv.set("forecast.n_steps", 0);
  EnsembleConfig e;
  e.n_members = members;
  write_ensemble_section(kv, e);
  kv.set("ensemble.n_inits", 0);
  kv.set("evaluate.forecast", "");
  kv.set("evaluate.fields", "");
  kv.set("evaluate.fair_crps", false);
  kv.set("evaluate.sweep", true);
  kv.set("evaluate.sweep_draws", 20);
  kv.set("evaluate.fan_cells", "");
  kv.set("plot.inputs", "");
}

std::string rename_prefix(std::string msg, const std::string& from, const std::string& to) {
  for (auto pos = msg.find(from); pos != std::string::npos; pos = msg.find(from, pos + to.size())) {
    msg.replace(pos, from.size(), to);
  }
  return msg;
}

std::string trimmed(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t") - a + 1);
}

TimeRange parse_range(const std::string& key, const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) throw ConfigError("key '" + key + "': expected '<start>/<end>' or 'auto'");
  TimeRange r;
  try {
    r = {parse_time(trimmed(text.substr(0, slash))), parse_time(trimmed(text.substr(slash + 1)))};
  } catch (const Error& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
  if (r.last < r.first) throw ConfigError("key '" + key + "': range ends before it starts");
  return r;
}

}  // namespace

KeyValueText preset(const std::string& name) {
  KeyValueText kv;
  if (name == "toy") {
    kv = toy_preset();
    common_tail(kv, 20);
  } else if (name == "paper") {
    kv = paper_preset();
    common_tail(kv, 100);
  } else {
    throw ConfigError("key 'run.preset': unknown preset '" + name + "' (expected toy or paper)");
  }
  return kv;
}

RunConfig RunConfig::build(const Sources& sources) {
  std::vector<KeyValueText> files;
  for (const auto& f : sources.files) files.push_back(KeyValueText::read(f));
  // The preset named last wins: --preset, else the last file naming one.
  std::string name = "toy";
  for (const auto& f : files) {
    if (auto p = f.find("run.preset")) name = *p;
  }
  if (sources.preset) name = *sources.preset;
  auto kv = preset(name);
  std::set<std::string> known;
  for (const auto& [k, v] : kv.items()) known.insert(k);
  auto apply = [&](const KeyValueText& layer, const std::string& origin) {
    for (const auto& [k, v] : layer.items()) {
      if (!known.count(k)) throw ConfigError("unknown configuration key '" + k + "' in " + origin);
    }
    kv.merge(layer);
  };
  for (std::size_t i = 0; i < files.size(); ++i) apply(files[i], sources.files[i].string());
  KeyValueText sets;
  for (const auto& s : sources.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value, got '" + s + "'");
    sets.set(trimmed(s.substr(0, eq)), trimmed(s.substr(eq + 1)));
  }
  apply(sets, "--set");
  kv.set("run.preset", name);
  if (sources.seed) kv.set("run.seed", static_cast<std::int64_t>(*sources.seed));
  if (sources.out) kv.set("run.out", sources.out->string());
  RunConfig cfg(std::move(kv));
  cfg.validate();
  return cfg;
}

RunConfig::RunConfig(KeyValueText values) : values_(std::move(values)) {}

std::uint64_t RunConfig::seed() const {
  const auto s = values_.get_int("run.seed");
  if (s < 0) throw ConfigError("key 'run.seed' must be non-negative");
  return static_cast<std::uint64_t>(s);
}

fs::path RunConfig::out() const {
  const auto& o = values_.at("run.out");
  if (o.empty()) throw ConfigError("key 'run.out' is empty");
  return o;
}

VariableCatalog DataSettings::variable_catalog() const {
  if (catalog == "toy") return VariableCatalog::toy();
  if (catalog == "weatherbench") return VariableCatalog::weatherbench();
  throw ConfigError("key 'data.catalog': unknown catalog '" + catalog + "' (expected toy or weatherbench)");
}

fs::path DataSettings::cache_dir() const {
  if (!cache.empty()) return cache;
  const char* root = std::getenv(kCacheEnv);
  return (root && *root ? fs::path(root) : fs::path("swinvrnn_cache")) / name;
}

std::pair<TimeRange, TimeRange> DataSettings::ranges(const TimeAxis& axis) const {
  if (axis.count < 1) throw PreconditionError("data has an empty time axis");
  auto resolve_auto = [&](bool test) -> TimeRange {
    if (source != "toy") {
      throw ConfigError(std::string("key '") + (test ? "data.test_range" : "data.train_range") +
                        "': 'auto' is only available for toy data");
    }
    // Whole generator blocks, the last test_fraction of them held out.
    const auto blocks = axis.count / window_stride;
    const auto n_test = std::max<std::int64_t>(1, std::llround(test_fraction * static_cast<double>(blocks)));
    if (blocks - n_test < 1) throw ConfigError("key 'data.test_fraction' leaves no training blocks");
    const auto split = (blocks - n_test) * window_stride;
    return test ? TimeRange{axis.at(split), axis.at(blocks * window_stride - 1)}
                : TimeRange{axis.at(0), axis.at(split - 1)};
  };
  auto train = train_range == "auto" ? resolve_auto(false) : parse_range("data.train_range", train_range);
  auto test = test_range == "auto" ? resolve_auto(true) : parse_range("data.test_range", test_range);
  return {train, test};
}

DataSettings RunConfig::data() const {
  const auto& kv = values_;
  DataSettings d;
  d.source = kv.at("data.source");
  if (d.source != "toy" && d.source != "archive") {
    throw ConfigError("key 'data.source': expected toy or archive, got '" + d.source + "'");
  }
  d.name = kv.at("data.name");
  if (d.name.empty()) throw ConfigError("key 'data.name' is empty");
  d.archive = kv.at("data.archive");
  d.catalog = kv.at("data.catalog");
  d.variable_catalog();
  d.first_year = static_cast<int>(kv.get_int("data.first_year"));
  d.last_year = static_cast<int>(kv.get_int("data.last_year"));
  if (d.last_year < d.first_year) throw ConfigError("key 'data.last_year' precedes data.first_year");
  d.train_range = kv.at("data.train_range");
  d.test_range = kv.at("data.test_range");
  if (d.train_range != "auto") parse_range("data.train_range", d.train_range);
  if (d.test_range != "auto") parse_range("data.test_range", d.test_range);
  d.test_fraction = kv.get_double("data.test_fraction");
  if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) throw ConfigError("key 'data.test_fraction' must lie in (0, 1)");
  d.toy_kind = parse_toy_kind(kv.at("data.toy_kind"));
  d.toy_steps = kv.get_int("data.toy_steps");
  if (d.toy_steps < 1) throw ConfigError("key 'data.toy_steps' must be positive");
  const auto seed = kv.get_int("data.toy_seed");
  if (seed < 0) throw ConfigError("key 'data.toy_seed' must be non-negative");
  d.toy_seed = static_cast<std::uint64_t>(seed);
  d.toy_history = kv.get_int("data.toy_history");
  d.n_lat = kv.get_int("data.n_lat");
  d.n_lon = kv.get_int("data.n_lon");
  if (d.n_lat < 1 || d.n_lon < 1) throw ConfigError("keys 'data.n_lat' and 'data.n_lon' must be positive");
  d.window_stride = kv.get_int("data.window_stride");
  if (d.window_stride < 1) throw ConfigError("key 'data.window_stride' must be positive");
  d.init_stride = kv.get_int("data.init_stride");
  if (d.init_stride < 1) throw ConfigError("key 'data.init_stride' must be positive");
  if (d.source == "toy" && !(d.toy_history >= 1 && d.toy_history < d.window_stride)) {
    throw ConfigError("key 'data.toy_history' must lie in [1, data.window_stride)");
  }
  d.cache = kv.at("data.cache");
  return d;
}

ModelConfig RunConfig::model() const { return ModelConfig::read(values_); }

PerturbationConfig RunConfig::perturbation() const { return PerturbationConfig::read(values_); }

TrainConfig RunConfig::train(int phase) const {
  if (phase != 1 && phase != 2) throw ConfigError("key 'train.phase' must be 1 or 2");
  const std::string prefix = "phase" + std::to_string(phase) + ".";
  auto t = TrainConfig::read(values_, prefix);
  t.phase = phase;
  t.seed = seed();
  try {
    t.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(rename_prefix(e.what(), "train.", prefix));
  }
  return t;
}

int RunConfig::train_phase() const {
  const auto p = values_.get_int("train.phase");
  if (p != 1 && p != 2) throw ConfigError("key 'train.phase' must be 1 or 2");
  return static_cast<int>(p);
}

fs::path RunConfig::init_checkpoint() const { return values_.at("train.init_checkpoint"); }
fs::path RunConfig::forecast_checkpoint() const { return values_.at("forecast.checkpoint"); }

std::int64_t RunConfig::forecast_inits() const {
  const auto n = values_.get_int("forecast.n_inits");
  if (n < 0) throw ConfigError("key 'forecast.n_inits' must be non-negative");
  return n;
}

std::int64_t RunConfig::forecast_steps() const {
  const auto n = values_.get_int("forecast.n_steps");
  if (n < 0) throw ConfigError("key 'forecast.n_steps' must be non-negative");
  return n;
}

EnsembleConfig RunConfig::ensemble() const {
  auto e = EnsembleConfig::read(values_);
  e.seed = seed();
  if (e.n_members < 1) throw ConfigError("key 'ensemble.n_members' must be at least 1");
  if (e.sigma < 0.0) throw ConfigError("key 'ensemble.sigma' must be non-negative");
  if (e.n_steps < 0) throw ConfigError("key 'ensemble.n_steps' must be non-negative");
  return e;
}

std::int64_t RunConfig::ensemble_inits() const {
  const auto n = values_.get_int("ensemble.n_inits");
  if (n < 0) throw ConfigError("key 'ensemble.n_inits' must be non-negative");
  return n;
}

EvaluateSettings RunConfig::evaluate() const {
  EvaluateSettings s;
  s.forecast = values_.at("evaluate.forecast");
  for (const auto& f : split_list(values_.at("evaluate.fields"))) {
    if (!trimmed(f).empty()) s.fields.push_back(trimmed(f));
  }
  s.fair_crps = values_.get_bool("evaluate.fair_crps");
  s.sweep = values_.get_bool("evaluate.sweep");
  s.sweep_draws = values_.get_int("evaluate.sweep_draws");
  if (s.sweep_draws < 1) throw ConfigError("key 'evaluate.sweep_draws' must be positive");
  for (const auto& cell : split_list(values_.at("evaluate.fan_cells"), ';')) {
    const auto c = trimmed(cell);
    if (c.empty()) continue;
    const auto colon = c.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(c);
      s.fan_cells.emplace_back(std::stoll(c.substr(0, colon)), std::stoll(c.substr(colon + 1)));
    } catch (const std::logic_error&) {
      throw ConfigError("key 'evaluate.fan_cells': expected 'row:col' items separated by ';', got '" + c + "'");
    }
  }
  return s;
}

PlotSettings RunConfig::plot() const {
  PlotSettings p;
  for (const auto& item : split_list(values_.at("plot.inputs"))) {
    if (!trimmed(item).empty()) p.inputs.emplace_back(trimmed(item));
  }
  return p;
}

void RunConfig::validate() const {
  seed();
  out();
  const auto d = data();
  const auto m = model();
  m.validate();
  const auto catalog = d.variable_catalog();
  auto require = [](bool ok, const std::string& key, std::int64_t got, std::int64_t want, const char* what) {
    if (!ok) {
      throw ConfigError("key '" + key + "' = " + std::to_string(got) + " but the data has " + std::to_string(want) +
                        " " + what);
    }
  };
  require(m.n_in == static_cast<std::int64_t>(catalog.n_in()), "model.n_in", m.n_in,
          static_cast<std::int64_t>(catalog.n_in()), "input channels");
  require(m.n_out == static_cast<std::int64_t>(catalog.n_out()), "model.n_out", m.n_out,
          static_cast<std::int64_t>(catalog.n_out()), "prognostic channels");
  require(m.height == d.n_lat, "model.height", m.height, d.n_lat, "latitudes");
  require(m.width == d.n_lon, "model.width", m.width, d.n_lon, "longitudes");
  perturbation().validate(m);
  train_phase();
  train(1);
  train(2);
  forecast_inits();
  forecast_steps();
  ensemble();
  ensemble_inits();
  evaluate();
  plot();
}

}  // namespace swinvrnn::cli
