#pragma once

#include <filesystem>

#include "swinvrnn/field_store.hpp"
#include "swinvrnn/key_value.hpp"

namespace swinvrnn {

// NetCDF archive in the WeatherBench layout: one directory per catalog
// variable (`<root>/<variable name>/*.nc`, dimensions (time, [level,] lat,
// lon)), constants under `<root>/constants/`. Only 6-hourly stamps inside
// [first_year, last_year] are kept, and they must form a gap-free axis.
//
// Errors: CatalogMismatch naming the missing variable or level,
// GeometryError when files disagree on the grid, IoError on any non-finite
// value.
FieldStore load_archive(const std::filesystem::path& root, const VariableCatalog& catalog, int first_year,
                        int last_year);

struct CacheContents {
  FieldStore store;  // memory-mapped
  NormStats stats;
  KeyValueText manifest;
};

inline constexpr const char* kCacheFormat = "swinvrnn-cache/1";

// Streams the archive straight into a consolidated cache directory,
// computes normalization statistics over `train_range`, and opens it.
CacheContents consolidate_archive(const std::filesystem::path& root, const VariableCatalog& catalog,
                                  int first_year, int last_year, const TimeRange& train_range,
                                  const std::filesystem::path& cache_dir, const KeyValueText& extra = {});

// Cache directory: `manifest.txt` (key = value text holding catalog, grid,
// time axis and statistics) plus one `channel_NNN.f32` little-endian float32
// block per channel, [frames, n_lat, n_lon].
void write_cache(const FieldStore& store, const NormStats& stats, const std::filesystem::path& dir,
                 const KeyValueText& extra = {});
CacheContents open_cache(const std::filesystem::path& dir);
bool cache_exists(const std::filesystem::path& dir);

}  // namespace swinvrnn
