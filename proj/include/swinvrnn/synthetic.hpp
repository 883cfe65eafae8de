#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swinvrnn/field_store.hpp"

namespace swinvrnn {

enum class ToyKind { kAdvection, kStochasticAdvection, kAnnualCycle };

ToyKind parse_toy_kind(const std::string& text);
const char* to_string(ToyKind kind);

struct ToyOptions {
  // Longitude drift in grid columns per 6-hour step (advection).
  int velocity = 1;
  // Stochastic advection is generated in independent blocks: `history_length`
  // stationary frames followed by frames drifting one column per step in the
  // block's regime direction.
  std::int64_t sequence_length = 26;
  std::int64_t history_length = 6;
  // Number of random zonal modes making up each pattern.
  int n_modes = 3;
};

// Synthetic archive on the toy catalog. `regimes` holds one entry (+1 or -1,
// eastward or westward drift) per stochastic-advection block; empty otherwise.
struct SyntheticArchive {
  FieldStore store;
  std::vector<int> regimes;
  std::int64_t sequence_length = 0;
};

SyntheticArchive synth_toy(ToyKind kind, const GridSpec& grid, std::int64_t n_steps, std::uint64_t seed,
                           const ToyOptions& options = {});

// Start of every synthetic time axis.
TimePoint synthetic_epoch();
// Generating signal of the annual-cycle toy, peaking at the start of July.
double annual_cycle_signal(TimePoint t);

}  // namespace swinvrnn
