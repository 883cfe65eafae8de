#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cli/svg.hpp"
#include "swinvrnn/climatology.hpp"
#include "swinvrnn/ensemble.hpp"
#include "swinvrnn/errors.hpp"
#include "swinvrnn/noise.hpp"
#include "swinvrnn/synthetic.hpp"
#include "swinvrnn/tensor_io.hpp"
#include "swinvrnn/training.hpp"
#include "swinvrnn/verification.hpp"

namespace swinvrnn::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

void write_run_manifest(const RunConfig& cfg, const std::string& command) {
  const auto out = cfg.out();
  fs::create_directories(out);
  write_text(out / "manifest.txt", "# swinvrnn " + command + "\n" + cfg.values().str());
}

// The data section as recorded in a cache manifest (the cache path itself
// does not change the contents).
KeyValueText data_fingerprint(const RunConfig& cfg) {
  KeyValueText kv;
  for (const auto& [k, v] : cfg.values().items()) {
    if (k.rfind("data.", 0) == 0 && k != "data.cache") kv.set(k, v);
  }
  return kv;
}

std::string range_text(const TimeRange& r) { return format_time(r.first) + "/" + format_time(r.last); }

struct LoadedModel {
  ModelKind kind = ModelKind::kSwinRNN;
  int phase = 1;
  ModelConfig config;
  SwinRNN rnn{nullptr};
  SwinVRNN vrnn{nullptr};

  SwinRNN backbone() const { return kind == ModelKind::kSwinRNN ? rnn : vrnn->backbone; }
};

LoadedModel load_model(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.txt")) throw PreconditionError("no checkpoint at " + dir.string());
  auto info = read_checkpoint_info(dir);
  LoadedModel m;
  m.kind = info.kind;
  m.phase = info.phase;
  m.config = info.model;
  if (info.kind == ModelKind::kSwinRNN) {
    m.rnn = load_swinrnn(dir);
  } else {
    m.vrnn = load_swinvrnn(dir);
  }
  return m;
}

void check_fits(const ModelConfig& m, const OpenedData& data, const std::string& what) {
  const auto& store = data.cache.store;
  const auto& cat = store.catalog();
  if (m.n_in != static_cast<std::int64_t>(cat.n_in()) || m.n_out != static_cast<std::int64_t>(cat.n_out()) ||
      m.height != static_cast<std::int64_t>(store.grid().n_lat()) ||
      m.width != static_cast<std::int64_t>(store.grid().n_lon())) {
    throw ConfigError(what + " expects " + std::to_string(m.n_in) + " channels on " + std::to_string(m.height) +
                      "x" + std::to_string(m.width) + ", the cache holds " + std::to_string(cat.n_in()) +
                      " channels on " + std::to_string(store.grid().n_lat()) + "x" +
                      std::to_string(store.grid().n_lon()));
  }
}

KeyValueText init_extra(const InitSet& inits, std::int64_t pick, std::int64_t t_hist, const std::string& sources,
                        const OpenedData& data) {
  KeyValueText kv;
  const auto first = inits.windows.first_index(pick);
  kv.set("init.window", pick);
  kv.set("init.first_index", first);
  kv.set("init.t_hist", t_hist);
  kv.set("init.time", format_time(data.cache.store.axis().at(first + t_hist - 1)));
  kv.set("source.checkpoints", sources);
  kv.set("data.cache_dir", data.settings.cache_dir().string());
  return kv;
}

std::string init_dir_name(std::size_t i) {
  std::ostringstream os;
  os << "init_" << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

OpenedData open_data(const RunConfig& cfg) {
  OpenedData d;
  d.settings = cfg.data();
  const auto dir = d.settings.cache_dir();
  if (!cache_exists(dir)) throw PreconditionError("no data cache at " + dir.string() + "; run prepare-data first");
  d.cache = open_cache(dir);
  const auto fingerprint = data_fingerprint(cfg);
  for (const auto& [k, v] : fingerprint.items()) {
    const auto have = d.cache.manifest.find(k);
    if (!have || *have != v) {
      throw PreconditionError("cache at " + dir.string() + " was built with " + k + " = " + have.value_or("<unset>") +
                              ", the configuration says " + v + "; rerun prepare-data");
    }
  }
  std::tie(d.train, d.test) = d.settings.ranges(d.cache.store.axis());
  return d;
}

InitSet init_windows(const OpenedData& data, std::int64_t t_hist, std::int64_t n_steps, std::int64_t n_inits,
                     std::int64_t init_stride) {
  InitSet set{make_sequences(data.cache.store, data.cache.stats, t_hist, n_steps, init_stride, data.test), {}};
  const auto n = set.windows.size();
  if (n == 0) {
    throw PreconditionError("test range " + range_text(data.test) + " holds no window of " +
                            std::to_string(t_hist + n_steps) + " frames");
  }
  const auto k = n_inits > 0 ? std::min(n_inits, n) : n;
  for (std::int64_t i = 0; i < k; ++i) set.picks.push_back(i * n / k);
  return set;
}

std::vector<std::int64_t> sweep_counts(std::int64_t m) {
  std::vector<std::int64_t> out;
  for (std::int64_t decade = 1; decade < m; decade *= 10) {
    for (std::int64_t f : {1, 2, 5}) {
      if (f * decade < m) out.push_back(f * decade);
    }
  }
  out.push_back(m);
  return out;
}

std::vector<fs::path> artifact_dirs(const fs::path& run) {
  std::vector<fs::path> out;
  if (!fs::is_directory(run)) throw PreconditionError("forecast directory " + run.string() + " does not exist");
  for (const auto& e : fs::directory_iterator(run)) {
    if (e.is_directory() && e.path().filename().string().rfind("init_", 0) == 0) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void cmd_prepare_data(const RunConfig& cfg, std::ostream& log) {
  const auto d = cfg.data();
  const auto dir = d.cache_dir();
  const auto fingerprint = data_fingerprint(cfg);
  write_run_manifest(cfg, "prepare-data");
  if (cache_exists(dir)) {
    const auto existing = KeyValueText::read(dir / "manifest.txt");
    bool same = true;
    for (const auto& [k, v] : fingerprint.items()) same = same && existing.find(k) == v;
    if (same) {
      log << "prepare-data: cache at " << dir.string() << " is up to date\n";
      return;
    }
    log << "prepare-data: data configuration changed, rebuilding " << dir.string() << "\n";
    fs::remove_all(dir);
  }
  const auto catalog = d.variable_catalog();
  auto extra = fingerprint;
  if (d.source == "toy") {
    ToyOptions opt;
    opt.sequence_length = d.window_stride;
    opt.history_length = d.toy_history;
    const auto grid = GridSpec::regular(static_cast<std::size_t>(d.n_lat), static_cast<std::size_t>(d.n_lon));
    auto toy = synth_toy(d.toy_kind, grid, d.toy_steps, d.toy_seed, opt);
    const auto [train, test] = d.ranges(toy.store.axis());
    extra.set("ranges.train", range_text(train));
    extra.set("ranges.test", range_text(test));
    write_cache(toy.store, compute_norm_stats(toy.store, train), dir, extra);
  } else {
    if (d.archive.empty()) throw ConfigError("key 'data.archive' is empty");
    const auto [train, test] = d.ranges(TimeAxis{make_time(d.first_year, 1, 1), 6, 1});
    extra.set("ranges.train", range_text(train));
    extra.set("ranges.test", range_text(test));
    consolidate_archive(d.archive, catalog, d.first_year, d.last_year, train, dir, extra);
  }
  const auto cache = open_cache(dir);
  log << "prepare-data: wrote " << cache.store.n_channels() << " channels x " << cache.store.n_times()
      << " steps on " << cache.store.grid().n_lat() << "x" << cache.store.grid().n_lon() << " to " << dir.string()
      << "\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto phase = cfg.train_phase();
  const auto tcfg = cfg.train(phase);
  if (phase == 2) {
    const auto init = cfg.init_checkpoint();
    if (init.empty() || !fs::exists(init / "manifest.txt")) {
      throw PreconditionError("phase 2 starts from a phase-1 checkpoint: set train.init_checkpoint (got '" +
                              init.string() + "')");
    }
  }
  auto data = open_data(cfg);
  const auto out = cfg.out();
  write_run_manifest(cfg, "train");
  torch::manual_seed(cfg.seed());

  SwinRNN rnn{nullptr};
  SwinVRNN vrnn{nullptr};
  ModelConfig model;
  if (phase == 1) {
    model = cfg.model();
    check_fits(model, data, "model");
    rnn = SwinRNN(model);
  } else {
    const auto init = cfg.init_checkpoint();
    const auto info = read_checkpoint_info(init);
    if (info.kind != ModelKind::kSwinRNN) {
      throw ConfigError("key 'train.init_checkpoint': " + init.string() + " is not a phase-1 SwinRNN checkpoint");
    }
    model = info.model;
    check_fits(model, data, "checkpoint " + init.string());
    const auto p = cfg.perturbation();
    p.validate(model);
    vrnn = load_swinvrnn(init, &p);
  }
  auto windows = make_sequences(data.cache.store, data.cache.stats, model.t_hist, model.t_pred,
                                data.settings.window_stride, data.train);
  if (windows.empty()) throw PreconditionError("training range " + range_text(data.train) + " holds no window");
  Trainer trainer = phase == 1 ? Trainer(rnn, tcfg) : Trainer(vrnn, tcfg);
  const auto planned = tcfg.planned_steps(windows.size());
  log << "train: phase " << phase << ", " << windows.size() << " windows, " << planned << " steps\n";
  FitOptions opt;
  opt.checkpoint_dir = out / "checkpoint";
  opt.log_path = out / "train_log.jsonl";
  const auto every = std::max<std::int64_t>(1, planned / 10);
  opt.on_step = [&](const StepMetrics& m) {
    if ((m.step + 1) % every == 0 || m.step + 1 == planned) {
      log << "  step " << m.step + 1 << "/" << planned << " loss " << fixed(m.loss) << " lr " << fixed(m.lr, 3)
          << "\n";
    }
  };
  const auto result = trainer.fit(windows, opt);
  log << "train: " << result.epochs_run << " epochs, final epoch loss " << fixed(result.epoch_loss.back())
      << ", checkpoint " << (out / "checkpoint").string() << "\n";
}

void cmd_forecast(const RunConfig& cfg, std::ostream& log) {
  const auto ckpt = cfg.forecast_checkpoint();
  if (ckpt.empty()) throw ConfigError("key 'forecast.checkpoint' is empty");
  auto data = open_data(cfg);
  const auto model = load_model(ckpt);
  check_fits(model.config, data, "checkpoint " + ckpt.string());
  const auto steps = cfg.forecast_steps() > 0 ? cfg.forecast_steps() : model.config.t_pred;
  const auto inits = init_windows(data, model.config.t_hist, steps, cfg.forecast_inits(), data.settings.init_stride);
  const auto out = cfg.out();
  write_run_manifest(cfg, "forecast");
  for (std::size_t i = 0; i < inits.picks.size(); ++i) {
    const auto sample = inits.windows[inits.picks[i]];
    auto f = forecast_control(model.backbone(), sample.history, steps, ckpt.string());
    write_ensemble(f, out / init_dir_name(i),
                   init_extra(inits, inits.picks[i], model.config.t_hist, ckpt.string(), data));
  }
  log << "forecast: " << inits.picks.size() << " control forecasts of " << steps << " steps in " << out.string()
      << "\n";
}

void cmd_ensemble(const RunConfig& cfg, std::ostream& log) {
  auto e = cfg.ensemble();
  e.validate();
  if (e.checkpoints.empty()) throw ConfigError("key 'ensemble.checkpoints' is empty");
  auto data = open_data(cfg);
  std::vector<LoadedModel> models;
  std::string sources;
  for (const auto& c : e.checkpoints) {
    models.push_back(load_model(c));
    check_fits(models.back().config, data, "checkpoint " + c.string());
    sources += (sources.empty() ? "" : ",") + c.string();
  }
  const bool needs_latent = e.method == EnsembleMethod::kLearned || e.method == EnsembleMethod::kMultiModel;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (needs_latent && models[i].kind != ModelKind::kSwinVRNN) {
      throw ConfigError(std::string("key 'ensemble.method': ") + to_string(e.method) +
                        " needs phase-2 SwinVRNN checkpoints, " + e.checkpoints[i].string() +
                        " holds a phase-1 SwinRNN");
    }
  }
  if (e.method != EnsembleMethod::kMultiModel && models.size() > 1) {
    throw ConfigError(std::string("key 'ensemble.checkpoints': ") + to_string(e.method) + " uses one checkpoint, got " +
                      std::to_string(models.size()));
  }
  const auto& lead = models.front().config;
  const auto steps = e.n_steps > 0 ? e.n_steps : lead.t_pred;
  e.n_steps = steps;
  const auto inits = init_windows(data, lead.t_hist, steps, cfg.ensemble_inits(), data.settings.init_stride);
  const auto out = cfg.out();
  write_run_manifest(cfg, "ensemble");
  for (std::size_t i = 0; i < inits.picks.size(); ++i) {
    const auto pick = inits.picks[i];
    const auto sample = inits.windows[pick];
    auto ec = e;
    ec.seed = derive_seed(e.seed, {0x1417ULL, static_cast<std::uint64_t>(pick)});
    auto extra = init_extra(inits, pick, lead.t_hist, sources, data);
    torch::Tensor latent_cov;
    EnsembleForecast f;
    const auto id = e.checkpoints.front().string();
    switch (e.method) {
      case EnsembleMethod::kControl:
        f = forecast_control(models.front().backbone(), sample.history, steps, id);
        break;
      case EnsembleMethod::kFixed:
        f = forecast_fixed(models.front().backbone(), sample.history, ec, id);
        break;
      case EnsembleMethod::kMcDropout:
        f = forecast_mc_dropout(models.front().backbone(), sample.history, ec, id);
        break;
      case EnsembleMethod::kLearned: {
        // Covariance of the first latent channel at the first step, for the heatmap.
        LatentTransform record = [&](std::int64_t step, const LatentDistribution& dist) {
          if (step == 0 && !latent_cov.defined()) latent_cov = dist.covariance().select(0, 0).select(0, 0).clone();
          return dist;
        };
        f = forecast_learned(models.front().vrnn, sample.history, ec, id, record);
        break;
      }
      case EnsembleMethod::kMultiModel: {
        std::vector<SwinVRNN> vr;
        std::vector<std::string> ids;
        for (std::size_t m = 0; m < models.size(); ++m) {
          vr.push_back(models[m].vrnn);
          ids.push_back(e.checkpoints[m].string());
        }
        f = forecast_multi_model(vr, ids, sample.history, ec);
        break;
      }
    }
    if (latent_cov.defined()) extra.set("latent_cov.shape", shape_text(latent_cov.sizes()));
    const auto dir = out / init_dir_name(i);
    write_ensemble(f, dir, extra);
    if (latent_cov.defined()) write_tensor(dir / "latent_cov.f32", latent_cov);
  }
  log << "ensemble: " << to_string(e.method) << ", " << inits.picks.size() << " initializations x "
      << (e.method == EnsembleMethod::kControl ? 1 : e.n_members * static_cast<std::int64_t>(models.size()))
      << " members in " << out.string() << "\n";
}

namespace {

struct Accumulator {
  double rmse = 0.0, crps = 0.0, spread = 0.0, acc = 0.0;
  std::int64_t cases = 0, acc_cases = 0;
  std::vector<std::int64_t> ranks;
  torch::Tensor sweep;  // [counts, T] summed over cases
};

}  // namespace

void cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  const auto s = cfg.evaluate();
  if (s.forecast.empty()) throw ConfigError("key 'evaluate.forecast' is empty");
  const auto dirs = artifact_dirs(s.forecast);
  if (dirs.empty()) throw PreconditionError("no forecast artifacts (init_*) under " + s.forecast.string());
  auto data = open_data(cfg);
  const auto& store = data.cache.store;
  const auto& catalog = store.catalog();
  const auto& stats = data.cache.stats;
  const auto weights = latitude_weights(store.grid());
  const auto fields = s.fields.empty() ? headline_channels(catalog) : s.fields;
  std::vector<std::size_t> channels;
  for (const auto& f : fields) {
    const auto c = catalog.find_channel(f);
    if (!c || *c >= catalog.n_out()) throw ConfigError("key 'evaluate.fields': '" + f + "' is not a prognostic channel");
    channels.push_back(*c);
  }
  std::optional<WeeklyClimatology> clim;
  try {
    clim = weekly_climatology(store, data.train);
  } catch (const PreconditionError& e) {
    log << "evaluate: no climatology (" << e.what() << "), ACC left as nan\n";
  }

  const auto out = cfg.out();
  write_run_manifest(cfg, "evaluate");
  std::string method;
  std::int64_t n_members = 0, n_steps = 0;
  std::vector<std::vector<Accumulator>> acc_table;  // [field][lead]
  std::vector<std::int64_t> counts;
  std::ofstream plot(out / "plot_data.jsonl", std::ios::trunc);
  const auto step_hours = store.axis().step_hours;

  for (std::size_t i = 0; i < dirs.size(); ++i) {
    KeyValueText manifest;
    auto f = read_ensemble(dirs[i], &manifest);
    const auto m = f.n_members();
    const auto t = f.members.size(2);
    if (i == 0) {
      method = to_string(f.method);
      n_members = m;
      n_steps = t;
      acc_table.assign(fields.size(), std::vector<Accumulator>(static_cast<std::size_t>(t)));
      counts = sweep_counts(m);
    } else if (m != n_members || t != n_steps || to_string(f.method) != method) {
      throw PreconditionError(dirs[i].string() + " does not match the first artifact's method, members or leads");
    }
    const auto first = manifest.get_int("init.first_index");
    const auto t_hist = manifest.get_int("init.t_hist");
    if (first < 0 || first + t_hist + t > store.n_times()) {
      throw PreconditionError("truth for " + dirs[i].string() + " lies outside the cache's time axis");
    }
    for (std::size_t fi = 0; fi < fields.size(); ++fi) {
      const auto c = channels[fi];
      const double mu = stats.mean[c], sd = stats.std[c];
      auto members = f.members.select(1, static_cast<std::int64_t>(c)).to(torch::kFloat64) * sd + mu;  // [M,T,H,W]
      auto truth = store.frames(std::vector<std::size_t>{c}, first + t_hist, t)[0].to(torch::kFloat64);  // [T,H,W]
      auto mean = members.mean(0);
      const auto case_seed = derive_seed(cfg.seed(), {0xe7a1ULL, static_cast<std::uint64_t>(first), c});
      for (std::int64_t l = 0; l < t; ++l) {
        auto& a = acc_table[fi][static_cast<std::size_t>(l)];
        auto ml = members.select(1, l), tl = truth.select(0, l), fl = mean.select(0, l);
        a.rmse += lat_weighted_rmse(fl, tl, weights);
        a.crps += crps_ensemble(ml, tl, weights, s.fair_crps);
        a.spread += ensemble_spread(ml, weights);
        if (clim) {
          const auto valid = store.axis().at(first + t_hist + l);
          const auto cl = clim->for_time(valid)[static_cast<std::int64_t>(c)].to(torch::kFloat64);
          const double v = acc(fl, tl, cl, weights);
          if (std::isfinite(v)) {
            a.acc += v;
            ++a.acc_cases;
          }
        }
        ++a.cases;
        if (m > 1) {
          auto h = rank_histogram(ml.reshape({m, -1}), tl.reshape({-1}),
                                  derive_seed(case_seed, {static_cast<std::uint64_t>(l)}));
          if (a.ranks.empty()) a.ranks.assign(h.size(), 0);
          for (std::size_t b = 0; b < h.size(); ++b) a.ranks[b] += h[b];
        }
      }
      if (s.sweep && m > 1) {
        auto sweep = member_sweep(members, truth, weights, counts, s.sweep_draws, case_seed);
        auto& a0 = acc_table[fi][0];
        std::vector<torch::Tensor> rows;
        for (const auto& p : sweep) rows.push_back(p.rmse.to(torch::kFloat64));
        auto stacked = torch::stack(rows);
        a0.sweep = a0.sweep.defined() ? a0.sweep + stacked : stacked;
      }
      if (i == 0) {
        // Plot records from the first initialization.
        const auto& grid = store.grid();
        auto cells = s.fan_cells;
        if (cells.empty()) cells.emplace_back(grid.n_lat() / 2, grid.n_lon() / 2);
        std::vector<double> leads;
        for (std::int64_t l = 0; l < t; ++l) leads.push_back(static_cast<double>((l + 1) * step_hours));
        for (const auto& [row, col] : cells) {
          if (row < 0 || col < 0 || row >= static_cast<std::int64_t>(grid.n_lat()) ||
              col >= static_cast<std::int64_t>(grid.n_lon())) {
            throw ConfigError("key 'evaluate.fan_cells': cell " + std::to_string(row) + ":" + std::to_string(col) +
                              " is off the grid");
          }
          auto fan = fan_at(members, truth, row, col);
          json rec{{"kind", "fan"},
                   {"field", fields[fi]},
                   {"row", row},
                   {"col", col},
                   {"lat", grid.lat_deg[static_cast<std::size_t>(row)]},
                   {"lon", grid.lon_deg[static_cast<std::size_t>(col)]},
                   {"lead_hours", leads}};
          std::vector<std::vector<double>> mem;
          for (std::int64_t k = 0; k < m; ++k) {
            auto r = fan.members[k].contiguous();
            mem.emplace_back(r.data_ptr<double>(), r.data_ptr<double>() + t);
          }
          auto tr = fan.truth.contiguous();
          rec["members"] = mem;
          rec["truth"] = std::vector<double>(tr.data_ptr<double>(), tr.data_ptr<double>() + t);
          plot << rec.dump() << '\n';
        }
        auto diff = (mean - truth).contiguous();
        const auto hw = static_cast<std::int64_t>(grid.n_lat() * grid.n_lon());
        for (std::int64_t l = 0; l < t; ++l) {
          const double* p = diff.data_ptr<double>() + l * hw;
          json rec{{"kind", "difference"},      {"field", fields[fi]},
                   {"lead_hours", leads[static_cast<std::size_t>(l)]},
                   {"n_lat", grid.n_lat()},     {"n_lon", grid.n_lon()},
                   {"values", std::vector<double>(p, p + hw)}};
          plot << rec.dump() << '\n';
        }
      }
    }
    if (i == 0 && manifest.contains("latent_cov.shape")) {
      const auto shape = parse_shape(manifest.at("latent_cov.shape"));
      auto cov = read_tensor(dirs[i] / "latent_cov.f32", shape).to(torch::kFloat64).contiguous();
      json rec{{"kind", "covariance"},
               {"size", shape.at(0)},
               {"values", std::vector<double>(cov.data_ptr<double>(), cov.data_ptr<double>() + cov.numel())}};
      plot << rec.dump() << '\n';
    }
  }
  plot.close();

  ScoreTable table;
  std::string ranks = "field,lead_hours,n_members,chi_square,counts\n";
  std::string sweep_csv = "field,lead_hours,n_members,rmse\n";
  KeyValueText summary;
  summary.set("method", method);
  summary.set("n_members", n_members);
  summary.set("n_inits", static_cast<std::int64_t>(dirs.size()));
  for (std::size_t fi = 0; fi < fields.size(); ++fi) {
    for (std::int64_t l = 0; l < n_steps; ++l) {
      const auto& a = acc_table[fi][static_cast<std::size_t>(l)];
      const double n = static_cast<double>(a.cases);
      const double hours = static_cast<double>((l + 1) * step_hours);
      ScoreRow row;
      row.field = fields[fi];
      row.lead_hours = hours;
      row.method = method;
      row.n_members = n_members;
      row.rmse = a.rmse / n;
      row.crps = a.crps / n;
      row.spread = a.spread / n;
      if (a.acc_cases > 0) row.acc = a.acc / static_cast<double>(a.acc_cases);
      table.add(row);
      if (!a.ranks.empty()) {
        std::string c;
        for (auto k : a.ranks) c += (c.empty() ? "" : "|") + std::to_string(k);
        ranks += fields[fi] + "," + format_number(hours) + "," + std::to_string(n_members) + "," +
                 format_number(rank_chi_square(a.ranks)) + "," + c + "\n";
      }
    }
    const auto& a0 = acc_table[fi][0];
    if (a0.sweep.defined()) {
      auto avg = a0.sweep / static_cast<double>(a0.cases);
      std::vector<SweepPoint> points;
      for (std::size_t k = 0; k < counts.size(); ++k) {
        points.push_back({counts[k], avg[static_cast<std::int64_t>(k)]});
        for (std::int64_t l = 0; l < n_steps; ++l) {
          sweep_csv += fields[fi] + "," + format_number(static_cast<double>((l + 1) * step_hours)) + "," +
                       std::to_string(counts[k]) + "," +
                       format_number(avg[static_cast<std::int64_t>(k)][l].item<double>()) + "\n";
        }
      }
      summary.set("sweep." + fields[fi] + ".violations", monotone_violations(points));
    }
  }
  table.write(out / "scores.csv");
  write_text(out / "ranks.csv", ranks);
  write_text(out / "sweep.csv", sweep_csv);
  summary.write(out / "summary.txt");
  log << "evaluate: " << method << " (" << n_members << " members, " << dirs.size() << " initializations)\n";
  for (const auto& r : table.rows()) {
    if (r.lead_hours == static_cast<double>(n_steps * step_hours)) {
      log << "  " << r.field << " +" << r.lead_hours << "h rmse " << fixed(r.rmse) << " crps " << fixed(r.crps)
          << " spread " << fixed(r.spread) << " acc " << fixed(r.acc) << "\n";
    }
  }
}

void cmd_plot(const RunConfig& cfg, std::ostream& log) {
  const auto p = cfg.plot();
  if (p.inputs.empty()) throw ConfigError("key 'plot.inputs' is empty");
  const auto out = cfg.out();
  write_run_manifest(cfg, "plot");
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& svg) {
    write_text(out / name, svg);
    written.push_back(name);
  };

  // Score curves, one line per input and method.
  std::map<std::string, std::vector<std::pair<std::string, std::vector<ScoreRow>>>> by_field;
  for (const auto& in : p.inputs) {
    const auto table = ScoreTable::read(in / "scores.csv");
    std::map<std::pair<std::string, std::string>, std::vector<ScoreRow>> groups;
    for (const auto& r : table.rows()) {
      groups[{r.field, r.method + " (" + std::to_string(r.n_members) + ")"}].push_back(r);
    }
    for (auto& [key, rows] : groups) by_field[key.first].emplace_back(key.second, rows);
  }
  for (const auto& [field, groups] : by_field) {
    for (const char* metric : {"rmse", "crps", "spread"}) {
      std::vector<Series> series;
      for (std::size_t g = 0; g < groups.size(); ++g) {
        Series s;
        s.label = groups[g].first;
        s.color = palette[g % std::size(palette)];
        for (const auto& r : groups[g].second) {
          s.x.push_back(r.lead_hours);
          const std::string m = metric;
          s.y.push_back(m == "rmse" ? r.rmse : m == "crps" ? r.crps : r.spread);
        }
        series.push_back(std::move(s));
      }
      emit(std::string(metric) + "_" + field + ".svg",
           line_chart(std::string(metric == std::string("rmse") ? "RMSE" : metric == std::string("crps") ? "CRPS"
                                                                                                           : "Spread") +
                          " " + field,
                      "lead time (h)", metric, series));
    }
  }

  // Fans, covariance and difference maps from the first input.
  std::ifstream data(p.inputs.front() / "plot_data.jsonl");
  if (!data) throw IoError("cannot read " + (p.inputs.front() / "plot_data.jsonl").string());
  std::string line;
  while (std::getline(data, line)) {
    if (line.empty()) continue;
    const auto rec = json::parse(line);
    const auto kind = rec.at("kind").get<std::string>();
    if (kind == "fan") {
      const auto leads = rec.at("lead_hours").get<std::vector<double>>();
      const auto members = rec.at("members").get<std::vector<std::vector<double>>>();
      std::vector<Series> series;
      std::vector<double> mean(leads.size(), 0.0);
      for (const auto& m : members) {
        series.push_back({"", leads, m, "#1f77b4", 0.8, 0.35});
        for (std::size_t l = 0; l < leads.size(); ++l) mean[l] += m[l] / static_cast<double>(members.size());
      }
      series.push_back({"ensemble mean", leads, mean, "#1f2f8f", 2.5, 1.0});
      series.push_back({"truth", leads, rec.at("truth").get<std::vector<double>>(), "#000000", 2.5, 1.0});
      const auto field = rec.at("field").get<std::string>();
      const auto row = rec.at("row").get<std::int64_t>(), col = rec.at("col").get<std::int64_t>();
      emit("fan_" + field + "_r" + std::to_string(row) + "_c" + std::to_string(col) + ".svg",
           line_chart(field + " at lat " + fixed(rec.at("lat").get<double>(), 4) + ", lon " +
                          fixed(rec.at("lon").get<double>(), 4) + " (" + std::to_string(members.size()) + " members)",
                      "lead time (h)", field, series));
    } else if (kind == "covariance") {
      const auto n = rec.at("size").get<int>();
      auto values = zero_diagonal(rec.at("values").get<std::vector<double>>(), n);
      emit("covariance.svg", heatmap("Latent covariance (diagonal set to zero)", values, n, n, true));
    } else if (kind == "difference") {
      const auto field = rec.at("field").get<std::string>();
      const auto hours = rec.at("lead_hours").get<double>();
      const auto rows = rec.at("n_lat").get<int>(), cols = rec.at("n_lon").get<int>();
      auto values = rec.at("values").get<std::vector<double>>();
      // Latitudes ascend in storage; draw north at the top.
      std::vector<double> flipped(values.size());
      for (int r = 0; r < rows; ++r) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(r) * cols, cols,
                    flipped.begin() + static_cast<std::ptrdiff_t>(rows - 1 - r) * cols);
      }
      emit("difference_" + field + "_" + format_number(hours) + "h.svg",
           heatmap(field + " forecast - truth at +" + format_number(hours) + "h", flipped, rows, cols, true));
    }
  }
  std::string list;
  for (const auto& w : written) list += w + "\n";
  write_text(out / "plots.txt", list);
  log << "plot: " << written.size() << " figures in " << out.string() << "\n";
}

}  // namespace swinvrnn::cli
