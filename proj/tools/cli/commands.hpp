#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "cli/config.hpp"
#include "swinvrnn/archive.hpp"
#include "swinvrnn/sequences.hpp"

namespace swinvrnn::cli {

// Each command writes `<out>/manifest.txt`, the merged configuration, which
// replays the run when passed back through --config. Progress goes to `log`.
void cmd_prepare_data(const RunConfig& cfg, std::ostream& log);
void cmd_train(const RunConfig& cfg, std::ostream& log);
// Control forecasts from forecast.checkpoint at the test initializations.
void cmd_forecast(const RunConfig& cfg, std::ostream& log);
void cmd_ensemble(const RunConfig& cfg, std::ostream& log);
// Writes scores.csv, ranks.csv, sweep.csv and plot_data.jsonl.
void cmd_evaluate(const RunConfig& cfg, std::ostream& log);
void cmd_plot(const RunConfig& cfg, std::ostream& log);

struct OpenedData {
  DataSettings settings;
  CacheContents cache;
  TimeRange train;
  TimeRange test;
};
// Opens the consolidated cache; PreconditionError when it is missing or was
// built from a different data section.
OpenedData open_data(const RunConfig& cfg);

// Forecast initializations: windows of `t_hist + n_steps` frames inside the
// test range every `init_stride` steps, thinned evenly to `n_inits` (0 keeps
// all of them).
struct InitSet {
  SequenceWindows windows;
  std::vector<std::int64_t> picks;  // window indices
};
InitSet init_windows(const OpenedData& data, std::int64_t t_hist, std::int64_t n_steps, std::int64_t n_inits,
                     std::int64_t init_stride);

// Member sizes 1, 2, 5, 10, 20, 50, ... below `m`, then m itself.
std::vector<std::int64_t> sweep_counts(std::int64_t m);

// Sorted `init_NNN` artifact directories of a forecast or ensemble run.
std::vector<std::filesystem::path> artifact_dirs(const std::filesystem::path& run);

}  // namespace swinvrnn::cli
