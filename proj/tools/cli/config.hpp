#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "swinvrnn/backbone.hpp"
#include "swinvrnn/calendar.hpp"
#include "swinvrnn/ensemble.hpp"
#include "swinvrnn/grid.hpp"
#include "swinvrnn/key_value.hpp"
#include "swinvrnn/perturbation.hpp"
#include "swinvrnn/synthetic.hpp"
#include "swinvrnn/training.hpp"

namespace swinvrnn::cli {

// Root directory for consolidated caches when data.cache is empty.
inline constexpr const char* kCacheEnv = "SWINVRNN_CACHE";

// Complete key set with defaults; every other key is rejected.
// "toy": 8x16 stochastic advection, minutes on a CPU. "paper": 5.625 degree
// WeatherBench catalog with the published training schedule.
KeyValueText preset(const std::string& name);

struct DataSettings {
  std::string source;  // "toy" or "archive"
  std::string name;
  std::filesystem::path archive;
  std::string catalog;  // "toy" or "weatherbench"
  int first_year = 0;
  int last_year = 0;
  std::string train_range;  // "auto" or "<time>/<time>"
  std::string test_range;
  double test_fraction = 0.2;
  ToyKind toy_kind = ToyKind::kStochasticAdvection;
  std::int64_t toy_steps = 0;
  std::uint64_t toy_seed = 0;
  std::int64_t toy_history = 0;
  std::int64_t n_lat = 0;
  std::int64_t n_lon = 0;
  // Stride between training windows and between forecast initializations;
  // also the toy generator's block length.
  std::int64_t window_stride = 1;
  std::int64_t init_stride = 1;
  std::filesystem::path cache;

  VariableCatalog variable_catalog() const;
  // data.cache, else $SWINVRNN_CACHE/<name>, else ./swinvrnn_cache/<name>.
  std::filesystem::path cache_dir() const;
  // Both ranges resolved against the data's time axis.
  std::pair<TimeRange, TimeRange> ranges(const TimeAxis& axis) const;
};

struct EvaluateSettings {
  std::filesystem::path forecast;
  std::vector<std::string> fields;  // empty: headline channels
  bool fair_crps = false;
  bool sweep = true;
  std::int64_t sweep_draws = 20;
  std::vector<std::pair<std::int64_t, std::int64_t>> fan_cells;  // empty: the centre cell
};

struct PlotSettings {
  std::vector<std::filesystem::path> inputs;
};

// Merged configuration: preset, then config files in order, then `--set`
// overrides, then --seed / --out. Unknown keys and malformed values raise
// ConfigError naming the key before any work starts.
class RunConfig {
 public:
  struct Sources {
    std::optional<std::string> preset;
    std::vector<std::filesystem::path> files;
    std::vector<std::string> sets;  // "section.key=value"
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
  };
  static RunConfig build(const Sources& sources);
  explicit RunConfig(KeyValueText values);

  const KeyValueText& values() const { return values_; }
  std::uint64_t seed() const;
  std::filesystem::path out() const;

  DataSettings data() const;
  ModelConfig model() const;
  PerturbationConfig perturbation() const;
  TrainConfig train(int phase) const;
  int train_phase() const;
  std::filesystem::path init_checkpoint() const;
  std::filesystem::path forecast_checkpoint() const;
  std::int64_t forecast_inits() const;
  std::int64_t forecast_steps() const;
  EnsembleConfig ensemble() const;
  std::int64_t ensemble_inits() const;
  EvaluateSettings evaluate() const;
  PlotSettings plot() const;

  // Parses every section so bad values surface up front.
  void validate() const;

 private:
  KeyValueText values_;
};

}  // namespace swinvrnn::cli
