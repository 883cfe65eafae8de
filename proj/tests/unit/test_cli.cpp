#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "cli/app.hpp"
#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "cli/svg.hpp"
#include "support/netcdf_writer.hpp"
#include "swinvrnn/archive.hpp"
#include "swinvrnn/ensemble.hpp"
#include "swinvrnn/errors.hpp"
#include "swinvrnn/verification.hpp"

using namespace swinvrnn;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result swinvrnn_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("swinvrnn_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Toy runs small enough for unit tests.
std::vector<std::string> quick(const fs::path& root, std::vector<std::string> args) {
  for (std::string s : {"data.cache=" + (root / "cache").string(), std::string("data.toy_steps=400"),
                        std::string("phase1.max_steps=4"), std::string("phase2.max_steps=4"),
                        std::string("ensemble.n_inits=2"), std::string("forecast.n_inits=2")}) {
    args.push_back("--set");
    args.push_back(s);
  }
  return args;
}

// Latitude-weighted MAE over every case, cell and lead of one channel, by loops.
double mae_oracle(const fs::path& run, const CacheContents& cache, std::size_t channel, std::int64_t lead) {
  const auto w = latitude_weights(cache.store.grid());
  const auto n_lat = cache.store.grid().n_lat(), n_lon = cache.store.grid().n_lon();
  double total = 0.0;
  int cases = 0;
  for (const auto& dir : cli::artifact_dirs(run)) {
    KeyValueText kv;
    auto f = read_ensemble(dir, &kv);
    const auto first = kv.get_int("init.first_index") + kv.get_int("init.t_hist");
    const auto truth = cache.store.field(channel, first + lead);
    auto member = f.members[0][static_cast<std::int64_t>(channel)][lead].to(torch::kFloat64);
    double sum = 0.0;
    for (std::size_t j = 0; j < n_lat; ++j) {
      for (std::size_t k = 0; k < n_lon; ++k) {
        const double phys = member[static_cast<std::int64_t>(j)][static_cast<std::int64_t>(k)].item<double>() *
                                cache.stats.std[channel] +
                            cache.stats.mean[channel];
        sum += w[j] * std::abs(phys - truth[j * n_lon + k]);
      }
    }
    total += sum / static_cast<double>(n_lat * n_lon);
    ++cases;
  }
  return total / cases;
}

}  // namespace

TEST_CASE("cli: presets and configuration layering") {
  const auto toy = cli::preset("toy");
  const auto paper = cli::preset("paper");
  CHECK(toy.at("data.source") == "toy");
  CHECK(paper.get_double("phase1.lr_backbone") == 2e-4);
  CHECK(paper.get_double("phase2.lr_backbone") == 2e-5);
  CHECK(paper.get_double("phase2.lr_perturbation") == 2e-4);
  CHECK(paper.get_int("phase1.epochs") == 100);
  CHECK(paper.get_int("phase2.epochs") == 100);
  CHECK(paper.get_double("ensemble.sigma") == 0.02);
  CHECK(paper.get_int("model.n_in") == 71);
  CHECK_THROWS_AS(cli::preset("huge"), ConfigError);
  // Both presets expose the same keys.
  std::vector<std::string> a, b;
  for (const auto& [k, v] : toy.items()) a.push_back(k);
  for (const auto& [k, v] : paper.items()) b.push_back(k);
  CHECK(a == b);

  const auto root = scratch("layers");
  std::ofstream(root / "one.toml") << "[ensemble]\nn_members = 7\nsigma = 0.5\n";
  std::ofstream(root / "two.toml") << "ensemble.sigma = 0.25\n";
  cli::RunConfig::Sources src;
  src.files = {root / "one.toml", root / "two.toml"};
  src.sets = {"ensemble.method=fixed"};
  src.seed = 42;
  auto cfg = cli::RunConfig::build(src);
  CHECK(cfg.ensemble().n_members == 7);
  CHECK(cfg.ensemble().sigma == 0.25);
  CHECK(cfg.ensemble().method == EnsembleMethod::kFixed);
  CHECK(cfg.seed() == 42);
  CHECK(cfg.ensemble().seed == 42);
  CHECK(cfg.train(2).seed == 42);
  CHECK(cfg.train(2).phase == 2);

  auto message = [&](std::vector<std::string> sets) {
    cli::RunConfig::Sources s;
    s.sets = std::move(sets);
    try {
      cli::RunConfig::build(s);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message({"model.window=abc"}).find("model.window") != std::string::npos);
  CHECK(message({"model.winodw=4"}).find("model.winodw") != std::string::npos);
  CHECK(message({"phase1.epochs=0"}).find("phase1.epochs") != std::string::npos);
  CHECK(message({"model.n_in=5"}).find("model.n_in") != std::string::npos);
  CHECK(message({"data.train_range=2000-01-01"}).find("data.train_range") != std::string::npos);
  CHECK(message({"ensemble.sigma=-1"}).find("ensemble.sigma") != std::string::npos);
  CHECK_FALSE(message({"noequals"}).empty());
  fs::remove_all(root);
}

TEST_CASE("cli: toy ranges split whole blocks") {
  auto d = cli::RunConfig::build({}).data();
  TimeAxis axis{synthetic_epoch(), 6, d.toy_steps};
  const auto [train, test] = d.ranges(axis);
  CHECK(axis.index_of(train.first) == 0);
  CHECK(axis.index_of(test.first) == 1600);
  CHECK(axis.index_of(train.last) == 1599);
  CHECK(axis.index_of(test.last) == 1999);
  CHECK(axis.index_of(test.first) % d.window_stride == 0);
  CHECK(cli::sweep_counts(1) == std::vector<std::int64_t>{1});
  CHECK(cli::sweep_counts(20) == std::vector<std::int64_t>{1, 2, 5, 10, 20});
  CHECK(cli::sweep_counts(100) == std::vector<std::int64_t>{1, 2, 5, 10, 20, 50, 100});
}

TEST_CASE("cli: usage errors and exit codes") {
  auto r = swinvrnn_cli({});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error[usage]", 0) == 0);
  CHECK(swinvrnn_cli({"frobnicate"}).code == 2);
  CHECK(swinvrnn_cli({"--help"}).code == 0);
  r = swinvrnn_cli({"train", "--set", "bogus.key=1"});
  CHECK(r.code == 2);
  CHECK(r.err.find("error[configuration]") != std::string::npos);
  CHECK(r.err.find("bogus.key") != std::string::npos);
  r = swinvrnn_cli({"train", "--config", "/nonexistent/run.toml"});
  CHECK(r.code != 0);
  CHECK(r.err.rfind("error[", 0) == 0);
}

TEST_CASE("cli: prepare-data is idempotent and honours the cache root variable") {
  const auto root = scratch("prep");
  ::setenv(cli::kCacheEnv, (root / "env_root").c_str(), 1);
  auto r = swinvrnn_cli({"prepare-data", "--set", "data.toy_steps=400", "--out", (root / "p").string()});
  ::unsetenv(cli::kCacheEnv);
  REQUIRE(r.code == 0);
  const auto cache = root / "env_root" / "toy";
  CHECK(cache_exists(cache));
  CHECK(fs::exists(root / "p" / "manifest.txt"));
  const auto stamp = fs::last_write_time(cache / "manifest.txt");

  ::setenv(cli::kCacheEnv, (root / "env_root").c_str(), 1);
  r = swinvrnn_cli({"prepare-data", "--set", "data.toy_steps=400", "--out", (root / "p").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("up to date") != std::string::npos);
  CHECK(fs::last_write_time(cache / "manifest.txt") == stamp);
  // A changed data section rebuilds.
  r = swinvrnn_cli({"prepare-data", "--set", "data.toy_steps=480", "--out", (root / "p").string()});
  ::unsetenv(cli::kCacheEnv);
  CHECK(r.code == 0);
  CHECK(open_cache(cache).store.n_times() == 480);

  // Training against a cache built from other settings is refused.
  r = swinvrnn_cli({"train", "--set", "data.toy_steps=400", "--set", "data.cache=" + cache.string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("data.toy_steps") != std::string::npos);
  r = swinvrnn_cli({"train", "--set", "data.cache=" + (root / "missing").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("prepare-data") != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("cli: WeatherBench-layout archive gives a 71-channel cache") {
  const auto root = scratch("wb");
  testing::write_catalog_archive(root / "archive", VariableCatalog::weatherbench(), GridSpec::regular(8, 16),
                        make_time(2015, 1, 1), 12);
  auto r = swinvrnn_cli({"prepare-data", "--preset", "paper", "--out", (root / "p").string(), "--set",
                         "data.archive=" + (root / "archive").string(), "--set",
                         "data.cache=" + (root / "cache").string(), "--set", "data.first_year=2015", "--set",
                         "data.last_year=2015", "--set", "data.train_range=2015-01-01/2015-01-02", "--set",
                         "data.test_range=2015-01-02/2015-01-03T18:00", "--set", "data.n_lat=8", "--set",
                         "data.n_lon=16", "--set", "model.height=8", "--set", "model.width=16", "--set",
                         "model.window=1"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto cache = open_cache(root / "cache");
  CHECK(cache.store.n_channels() == 71);
  CHECK(cache.store.catalog().n_out() == 69);
  CHECK(cache.manifest.contains("norm.mean"));
  CHECK(cache.store.field(5, 3)[17] == static_cast<float>(testing::toy_archive_value(5, 3, 1, 1)));
  const auto manifest = KeyValueText::parse(slurp(root / "p" / "manifest.txt"));
  CHECK(manifest.get_double("phase1.lr_backbone") == 2e-4);
  CHECK(manifest.get_double("phase2.lr_backbone") == 2e-5);
  CHECK(manifest.get_int("phase1.epochs") == 100);

  r = swinvrnn_cli({"prepare-data", "--preset", "paper", "--set", "data.cache=" + (root / "c2").string(), "--out",
                    (root / "p2").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("data.archive") != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("cli: train, forecast, ensemble, evaluate and plot on the toy preset") {
  const auto root = scratch("flow");
  auto run = [&](std::vector<std::string> args) {
    auto r = swinvrnn_cli(quick(root, std::move(args)));
    INFO(r.err);
    REQUIRE(r.code == 0);
    return r;
  };
  run({"prepare-data", "--out", (root / "prep").string()});
  auto r = swinvrnn_cli(quick(root, {"train", "--phase", "2", "--out", (root / "bad").string()}));
  CHECK(r.code == 3);
  CHECK(r.err.find("train.init_checkpoint") != std::string::npos);

  run({"train", "--phase", "1", "--out", (root / "p1").string()});
  CHECK(fs::exists(root / "p1" / "checkpoint" / "manifest.txt"));
  CHECK(fs::exists(root / "p1" / "train_log.jsonl"));
  run({"train", "--phase", "2", "--init", (root / "p1" / "checkpoint").string(), "--out", (root / "p2").string()});
  CHECK(read_checkpoint_info(root / "p2" / "checkpoint").kind == ModelKind::kSwinVRNN);

  // Method and checkpoint mismatches.
  r = swinvrnn_cli(quick(root, {"ensemble", "--method", "learned", "--checkpoints",
                                (root / "p1" / "checkpoint").string(), "--out", (root / "x").string()}));
  CHECK(r.code == 2);
  CHECK(r.err.find("phase-1") != std::string::npos);
  r = swinvrnn_cli(quick(root, {"ensemble", "--method", "multi-model", "--checkpoints",
                                (root / "p2" / "checkpoint").string(), "--out", (root / "x").string()}));
  CHECK(r.code == 2);
  CHECK(r.err.find("ensemble.checkpoints") != std::string::npos);

  run({"forecast", "--checkpoint", (root / "p1" / "checkpoint").string(), "--out", (root / "fc").string()});
  run({"ensemble", "--method", "learned", "--members", "100", "--checkpoints", (root / "p2" / "checkpoint").string(),
       "--out", (root / "ens").string()});
  auto dirs = cli::artifact_dirs(root / "ens");
  REQUIRE(dirs.size() == 2);
  auto first = read_ensemble(dirs[0]);
  CHECK(first.n_members() == 100);
  CHECK(first.method == EnsembleMethod::kLearned);
  CHECK(fs::exists(dirs[0] / "latent_cov.f32"));

  // Sigma 0 reproduces the control bit for bit.
  run({"ensemble", "--method", "fixed", "--sigma", "0", "--members", "3", "--checkpoints",
       (root / "p1" / "checkpoint").string(), "--out", (root / "fix0").string()});
  for (std::size_t i = 0; i < 2; ++i) {
    auto c = read_ensemble(cli::artifact_dirs(root / "fc")[i]);
    auto f = read_ensemble(cli::artifact_dirs(root / "fix0")[i]);
    for (int m = 0; m < 3; ++m) CHECK(torch::equal(f.members[m], c.members[0]));
  }

  // Control scores: CRPS is the MAE.
  run({"evaluate", "--forecast", (root / "fc").string(), "--out", (root / "ev_fc").string()});
  const auto cache = open_cache(root / "cache");
  const auto fc_scores = ScoreTable::read(root / "ev_fc" / "scores.csv");
  for (std::int64_t lead : {0, 5}) {
    const auto row = fc_scores.find("tracer_b", "control", 6.0 * (lead + 1));
    REQUIRE(row);
    CHECK(row->n_members == 1);
    CHECK(row->spread == 0.0);
    CHECK(row->crps == doctest::Approx(mae_oracle(root / "fc", cache, 1, lead)).epsilon(1e-9));
  }

  run({"evaluate", "--forecast", (root / "ens").string(), "--set", "evaluate.fan_cells=1:2;3:4", "--out",
       (root / "ev_ens").string()});
  const auto scores = ScoreTable::read(root / "ev_ens" / "scores.csv");
  CHECK(scores.rows().size() == 2 * 6);
  CHECK(scores.rows().front().n_members == 100);
  CHECK(slurp(root / "ev_ens" / "ranks.csv").find("tracer_a,36,100,") != std::string::npos);
  CHECK(slurp(root / "ev_ens" / "sweep.csv").find("tracer_a,6,50,") != std::string::npos);

  // Difference records are ensemble mean minus truth.
  std::ifstream pd(root / "ev_ens" / "plot_data.jsonl");
  std::string line;
  int fans = 0, diffs = 0, covs = 0;
  KeyValueText kv;
  auto f0 = read_ensemble(dirs[0], &kv);
  const auto t0 = kv.get_int("init.first_index") + kv.get_int("init.t_hist");
  while (std::getline(pd, line)) {
    const auto rec = nlohmann::json::parse(line);
    const auto kind = rec.at("kind").get<std::string>();
    fans += kind == "fan";
    covs += kind == "covariance";
    if (kind == "difference" && rec.at("field") == "tracer_a" && rec.at("lead_hours") == 12.0) {
      ++diffs;
      const auto values = rec.at("values").get<std::vector<double>>();
      const auto truth = cache.store.field(0, t0 + 1);
      auto mean = f0.members.select(1, 0).select(1, 1).to(torch::kFloat64).mean(0);
      for (std::size_t i : {0UL, 17UL, 127UL}) {
        const double m = mean.view(-1)[static_cast<std::int64_t>(i)].item<double>() * cache.stats.std[0] +
                         cache.stats.mean[0];
        CHECK(values[i] == doctest::Approx(m - truth[i]).epsilon(1e-9));
      }
    }
  }
  CHECK(fans == 4);
  CHECK(diffs == 1);
  CHECK(covs == 1);

  run({"plot", "--inputs", (root / "ev_ens").string() + "," + (root / "ev_fc").string(), "--out",
       (root / "plots").string()});
  for (const char* name : {"rmse_tracer_a.svg", "crps_tracer_b.svg", "fan_tracer_a_r1_c2.svg", "fan_tracer_a_r3_c4.svg",
                           "fan_tracer_b_r1_c2.svg", "covariance.svg", "difference_tracer_a_36h.svg"}) {
    CHECK_MESSAGE(fs::exists(root / "plots" / name), name);
  }
  const auto rmse_svg = slurp(root / "plots" / "rmse_tracer_a.svg");
  CHECK(rmse_svg.find("learned-distribution (100)") != std::string::npos);
  CHECK(rmse_svg.find("control (1)") != std::string::npos);

  // Replaying a manifest reproduces the score table.
  run({"evaluate", "--config", (root / "ev_ens" / "manifest.txt").string(), "--out", (root / "ev_replay").string()});
  CHECK(slurp(root / "ev_replay" / "scores.csv") == slurp(root / "ev_ens" / "scores.csv"));
  CHECK(slurp(root / "ev_replay" / "sweep.csv") == slurp(root / "ev_ens" / "sweep.csv"));

  fs::create_directories(root / "empty");
  r = swinvrnn_cli(quick(root, {"evaluate", "--forecast", (root / "empty").string(), "--out", (root / "e").string()}));
  CHECK(r.code == 3);
  fs::remove_all(root);
}

TEST_CASE("cli: member sweep on a synthetic ensemble") {
  const auto root = scratch("sweep");
  REQUIRE(swinvrnn_cli(quick(root, {"prepare-data", "--out", (root / "p").string()})).code == 0);
  const auto cache = open_cache(root / "cache");
  // Members are truth plus independent noise (normalized units).
  torch::manual_seed(3);
  for (int i = 0; i < 2; ++i) {
    const std::int64_t first = 320 + 8 * i;
    auto truth = cache.store.frames(std::vector<std::size_t>{0, 1}, first + 2, 6).to(torch::kFloat64);
    for (int c = 0; c < 2; ++c) truth[c] = (truth[c] - cache.stats.mean[c]) / cache.stats.std[c];
    EnsembleForecast f;
    f.method = EnsembleMethod::kFixed;
    f.members = (truth.unsqueeze(0) + torch::randn({100, 2, 6, 8, 16}, torch::kFloat64)).to(torch::kFloat32);
    f.mean = ensemble_mean(f.members);
    for (int m = 0; m < 100; ++m) f.provenance.push_back({"synthetic", 3, m});
    KeyValueText extra;
    extra.set("init.first_index", first);
    extra.set("init.t_hist", 2);
    write_ensemble(f, root / "ens" / ("init_00" + std::to_string(i)), extra);
  }
  auto r = swinvrnn_cli(quick(root, {"evaluate", "--forecast", (root / "ens").string(), "--set",
                                     "evaluate.sweep_draws=40", "--out", (root / "ev").string()}));
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto summary = KeyValueText::read(root / "ev" / "summary.txt");
  CHECK(summary.get_int("sweep.tracer_a.violations") == 0);
  CHECK(summary.get_int("sweep.tracer_b.violations") == 0);
  fs::remove_all(root);
}

TEST_CASE("cli: figure helpers") {
  const std::vector<double> m{1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(cli::zero_diagonal(m, 3) == std::vector<double>{0, 2, 3, 4, 0, 6, 7, 8, 0});
  CHECK_THROWS_AS(cli::zero_diagonal(m, 2), ShapeError);
  const auto svg = cli::heatmap("t", cli::zero_diagonal(m, 3), 3, 3, true);
  CHECK(svg.rfind("<svg", 0) == 0);
  // Nine cells plus the colour bar.
  std::size_t rects = 0;
  for (auto p = svg.find("<rect"); p != std::string::npos; p = svg.find("<rect", p + 1)) ++rects;
  CHECK(rects == 1 + 9 + 50);
  const auto chart = cli::line_chart("a < b", "x", "y", {{"s&t", {0, 1}, {1, 2}}});
  CHECK(chart.find("a &lt; b") != std::string::npos);
  CHECK(chart.find("s&amp;t") != std::string::npos);
  CHECK_THROWS_AS(cli::line_chart("t", "x", "y", {{"bad", {0, 1}, {1}}}), ShapeError);
}
