#include "swinvrnn/archive.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "swinvrnn/binary_io.hpp"
#include "swinvrnn/errors.hpp"
#include "swinvrnn/netcdf.hpp"

namespace swinvrnn {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kSixHours = 6 * 3600;

struct Stamp {
  TimePoint time;
  std::size_t file;
  std::int64_t record;
};

struct EntrySource {
  std::vector<NetcdfFile> files;
  std::vector<Stamp> stamps;  // empty for constants
  std::vector<std::size_t> level_index;  // file level position per catalog level
};

std::vector<fs::path> netcdf_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && (e.path().extension() == ".nc" || e.path().extension() == ".nc4")) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string first_present(const NetcdfFile& f, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (f.find(n)) return n;
  }
  return {};
}

GridSpec read_grid(const NetcdfFile& f) {
  const auto lat_name = first_present(f, {"lat", "latitude"});
  const auto lon_name = first_present(f, {"lon", "longitude"});
  if (lat_name.empty() || lon_name.empty()) throw GeometryError(f.path().string() + ": missing lat/lon coordinates");
  GridSpec g;
  g.lat_deg = f.read_all(lat_name);
  g.lon_deg = f.read_all(lon_name);
  for (auto& lon : g.lon_deg) {
    if (lon < 0.0) lon += 360.0;
  }
  g.resolution_deg = g.lon_deg.size() > 1 ? g.lon_deg[1] - g.lon_deg[0] : 360.0;
  try {
    g.validate();
  } catch (const GeometryError& e) {
    throw GeometryError(f.path().string() + ": " + e.what());
  }
  return g;
}

std::string field_label(const VariableEntry& entry, int level) {
  return level < 0 ? entry.name : entry.name + "@" + std::to_string(level) + "hPa";
}

// Opens the files holding `entry` and indexes their 6-hourly stamps.
EntrySource locate(const fs::path& root, const VariableEntry& entry, const TimeRange& years,
                   std::optional<GridSpec>& grid) {
  EntrySource src;
  std::vector<fs::path> candidates = netcdf_files(root / entry.name);
  if (entry.kind == VariableKind::kConstant) {
    auto more = netcdf_files(root / "constants");
    candidates.insert(candidates.end(), more.begin(), more.end());
  }
  for (const auto& path : candidates) {
    auto f = NetcdfFile::open(path);
    if (!f.find(entry.short_name)) continue;
    const auto g = read_grid(f);
    if (!grid) {
      grid = g;
    } else if (!grid->same_geometry(g)) {
      throw GeometryError(path.string() + ": grid differs from the rest of the archive");
    }
    src.files.push_back(std::move(f));
    if (entry.kind == VariableKind::kConstant) break;
  }
  if (src.files.empty()) {
    throw CatalogMismatch("archive has no files providing '" + entry.name + "' (variable '" + entry.short_name + "')");
  }
  const auto expected_rank = entry.kind == VariableKind::kThreeD ? 4u : 3u;
  for (std::size_t fi = 0; fi < src.files.size(); ++fi) {
    const auto& f = src.files[fi];
    const auto& var = f.variable(entry.short_name);
    if (entry.kind == VariableKind::kConstant) {
      if (var.shape.size() != 2 && !(var.shape.size() == 3 && var.shape[0] == 1)) {
        throw GeometryError(f.path().string() + ": constant '" + entry.short_name + "' must be (lat, lon)");
      }
      continue;
    }
    if (var.shape.size() != expected_rank) {
      throw GeometryError(f.path().string() + ": '" + entry.short_name + "' must have dimensions (time, " +
                          (expected_rank == 4 ? "level, " : "") + "lat, lon)");
    }
    if (!f.find("time")) throw IoError(f.path().string() + ": missing time coordinate");
    const auto units = f.text_attribute("time", "units");
    if (!units) throw IoError(f.path().string() + ": time coordinate has no units");
    const auto cf = CfTimeUnits::parse(*units);
    const auto times = f.read_all("time");
    for (std::size_t r = 0; r < times.size(); ++r) {
      const auto t = cf.to_time(times[r]);
      if (t.time_since_epoch().count() % kSixHours != 0 || !years.contains(t)) continue;
      src.stamps.push_back({t, fi, static_cast<std::int64_t>(r)});
    }
    if (entry.kind == VariableKind::kThreeD) {
      const auto level_name = first_present(f, {"level", "plev", "isobaricInhPa", "pressure_level"});
      if (level_name.empty()) throw IoError(f.path().string() + ": missing level coordinate");
      auto levels = f.read_all(level_name);
      if (level_name == "plev") {
        for (auto& l : levels) l /= 100.0;  // Pa -> hPa
      }
      std::vector<std::size_t> index;
      for (int want : entry.levels) {
        auto it = std::find_if(levels.begin(), levels.end(), [&](double l) { return std::abs(l - want) < 1e-3; });
        if (it == levels.end()) {
          throw CatalogMismatch(f.path().string() + ": missing field " + field_label(entry, want));
        }
        index.push_back(static_cast<std::size_t>(it - levels.begin()));
      }
      if (fi == 0) {
        src.level_index = index;
      } else if (index != src.level_index) {
        throw GeometryError(f.path().string() + ": level ordering differs between files");
      }
    }
  }
  std::sort(src.stamps.begin(), src.stamps.end(), [](const Stamp& a, const Stamp& b) { return a.time < b.time; });
  for (std::size_t i = 1; i < src.stamps.size(); ++i) {
    if (src.stamps[i].time == src.stamps[i - 1].time) {
      throw IoError("duplicate time stamp " + format_time(src.stamps[i].time) + " for '" + entry.name + "'");
    }
  }
  return src;
}

class FrameSink {
 public:
  virtual ~FrameSink() = default;
  virtual void begin(const VariableCatalog& catalog, const GridSpec& grid, const TimeAxis& axis) = 0;
  // Frames for a channel arrive in time order.
  virtual void write(std::size_t channel, std::span<const float> frame) = 0;
};

class MemorySink final : public FrameSink {
 public:
  void begin(const VariableCatalog& catalog, const GridSpec&, const TimeAxis&) override {
    channels.assign(catalog.n_in(), {});
  }
  void write(std::size_t channel, std::span<const float> frame) override {
    channels[channel].insert(channels[channel].end(), frame.begin(), frame.end());
  }
  std::vector<std::vector<float>> channels;
};

class CacheSink final : public FrameSink {
 public:
  explicit CacheSink(fs::path dir) : dir_(std::move(dir)) {}
  void begin(const VariableCatalog& catalog, const GridSpec&, const TimeAxis&) override {
    fs::create_directories(dir_);
    streams_.clear();
    for (std::size_t c = 0; c < catalog.n_in(); ++c) {
      streams_.emplace_back(dir_ / channel_file(c), std::ios::binary | std::ios::trunc);
      if (!streams_.back()) throw IoError("cannot write cache channel in " + dir_.string());
    }
  }
  void write(std::size_t channel, std::span<const float> frame) override {
    static_assert(std::endian::native == std::endian::little, "cache writer assumes a little-endian host");
    streams_[channel].write(reinterpret_cast<const char*>(frame.data()),
                            static_cast<std::streamsize>(frame.size_bytes()));
    if (!streams_[channel]) throw IoError("short write in cache " + dir_.string());
  }
  static std::string channel_file(std::size_t c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "channel_%03zu.f32", c);
    return buf;
  }

 private:
  fs::path dir_;
  std::vector<std::ofstream> streams_;
};

void check_finite(std::span<const float> values, const NetcdfFile& f, const VariableEntry& entry, TimePoint t) {
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw IoError(f.path().string() + ": non-finite value in '" + entry.short_name + "' at " + format_time(t));
    }
  }
}

std::pair<GridSpec, TimeAxis> ingest(const fs::path& root, const VariableCatalog& catalog, int first_year,
                                     int last_year, FrameSink& sink) {
  if (!fs::is_directory(root)) throw IoError("archive directory " + root.string() + " does not exist");
  const auto years = TimeRange::years(first_year, last_year);
  std::optional<GridSpec> grid;
  std::vector<EntrySource> sources;
  for (const auto& entry : catalog.entries()) sources.push_back(locate(root, entry, years, grid));

  TimeAxis axis;
  const std::vector<Stamp>* reference = nullptr;
  for (std::size_t e = 0; e < sources.size(); ++e) {
    if (catalog.entries()[e].kind == VariableKind::kConstant) continue;
    const auto& stamps = sources[e].stamps;
    if (!reference) {
      reference = &stamps;
      if (stamps.empty()) {
        throw CatalogMismatch("no 6-hourly data for '" + catalog.entries()[e].name + "' in " +
                              std::to_string(first_year) + ".." + std::to_string(last_year));
      }
      axis = TimeAxis{stamps.front().time, 6, static_cast<std::int64_t>(stamps.size())};
      for (std::size_t i = 0; i < stamps.size(); ++i) {
        if (stamps[i].time != axis.at(static_cast<std::int64_t>(i))) {
          throw IoError("gap in the 6-hourly time axis before " + format_time(stamps[i].time));
        }
      }
      continue;
    }
    bool same = stamps.size() == reference->size();
    for (std::size_t i = 0; same && i < stamps.size(); ++i) same = stamps[i].time == (*reference)[i].time;
    if (!same) throw CatalogMismatch("time axis of '" + catalog.entries()[e].name + "' differs from the archive");
  }
  if (!reference) throw CatalogMismatch("catalog has no time-varying fields");

  const auto hw = grid->n_lat() * grid->n_lon();
  sink.begin(catalog, *grid, axis);
  for (std::size_t e = 0; e < sources.size(); ++e) {
    const auto& entry = catalog.entries()[e];
    const auto& src = sources[e];
    const auto offset = catalog.channel_offset(entry.name);
    if (entry.kind == VariableKind::kConstant) {
      const auto& f = src.files.front();
      const auto values = f.read_all(entry.short_name);
      std::vector<float> frame(values.begin(), values.end());
      check_finite(frame, f, entry, axis.start);
      sink.write(offset, frame);
      continue;
    }
    for (const auto& stamp : src.stamps) {
      const auto& f = src.files[stamp.file];
      const auto record = f.read_record(entry.short_name, stamp.record);
      check_finite(record, f, entry, stamp.time);
      if (entry.kind == VariableKind::kTwoD) {
        sink.write(offset, record);
      } else {
        for (std::size_t l = 0; l < src.level_index.size(); ++l) {
          sink.write(offset + l, std::span<const float>(record).subspan(src.level_index[l] * hw, hw));
        }
      }
    }
  }
  return {*grid, axis};
}

void write_manifest(const fs::path& dir, const VariableCatalog& catalog, const GridSpec& grid, const TimeAxis& axis,
                    const NormStats* stats, const KeyValueText& extra) {
  KeyValueText kv;
  kv.set("format", kCacheFormat);
  kv.set("catalog", catalog.serialize());
  kv.set("grid.lat_deg", join_numbers(grid.lat_deg));
  kv.set("grid.lon_deg", join_numbers(grid.lon_deg));
  kv.set("grid.resolution_deg", grid.resolution_deg);
  kv.set("time.start", format_time(axis.start));
  kv.set("time.step_hours", axis.step_hours);
  kv.set("time.count", axis.count);
  for (std::size_t c = 0; c < catalog.n_in(); ++c) {
    const auto prefix = "channel." + std::to_string(c);
    kv.set(prefix + ".name", catalog.channels()[c].name);
    kv.set(prefix + ".file", CacheSink::channel_file(c));
    kv.set(prefix + ".frames", catalog.channels()[c].constant ? std::int64_t{1} : axis.count);
  }
  if (stats) {
    kv.set("norm.mean", join_numbers(stats->mean));
    kv.set("norm.std", join_numbers(stats->std));
  }
  kv.merge(extra);
  kv.write(dir / "manifest.txt");
}

}  // namespace

FieldStore load_archive(const fs::path& root, const VariableCatalog& catalog, int first_year, int last_year) {
  MemorySink sink;
  auto [grid, axis] = ingest(root, catalog, first_year, last_year, sink);
  return FieldStore::from_buffers(catalog, std::move(grid), axis, std::move(sink.channels));
}

CacheContents consolidate_archive(const fs::path& root, const VariableCatalog& catalog, int first_year,
                                  int last_year, const TimeRange& train_range, const fs::path& cache_dir,
                                  const KeyValueText& extra) {
  CacheSink sink(cache_dir);
  auto [grid, axis] = ingest(root, catalog, first_year, last_year, sink);
  sink = CacheSink(cache_dir);  // flush and close channel streams
  write_manifest(cache_dir, catalog, grid, axis, nullptr, extra);
  auto opened = open_cache(cache_dir);
  const auto stats = compute_norm_stats(opened.store, train_range);
  write_manifest(cache_dir, catalog, grid, axis, &stats, extra);
  return open_cache(cache_dir);
}

void write_cache(const FieldStore& store, const NormStats& stats, const fs::path& dir, const KeyValueText& extra) {
  fs::create_directories(dir);
  for (std::size_t c = 0; c < store.n_channels(); ++c) {
    std::vector<float> block;
    block.reserve(static_cast<std::size_t>(store.frame_count(c)) * store.cells());
    for (std::int64_t t = 0; t < store.frame_count(c); ++t) {
      const auto f = store.field(c, t);
      block.insert(block.end(), f.begin(), f.end());
    }
    write_f32_le(dir / CacheSink::channel_file(c), block);
  }
  write_manifest(dir, store.catalog(), store.grid(), store.axis(), &stats, extra);
}

bool cache_exists(const fs::path& dir) { return fs::exists(dir / "manifest.txt"); }

CacheContents open_cache(const fs::path& dir) {
  if (!cache_exists(dir)) throw IoError("no cache manifest in " + dir.string());
  auto kv = KeyValueText::read(dir / "manifest.txt");
  if (kv.at("format") != kCacheFormat) throw IoError(dir.string() + ": unsupported cache format '" + kv.at("format") + "'");
  auto catalog = VariableCatalog::parse(kv.at("catalog"));
  GridSpec grid;
  grid.lat_deg = kv.get_doubles("grid.lat_deg");
  grid.lon_deg = kv.get_doubles("grid.lon_deg");
  grid.resolution_deg = kv.get_double("grid.resolution_deg");
  grid.validate();
  TimeAxis axis{parse_time(kv.at("time.start")), static_cast<int>(kv.get_int("time.step_hours")),
                kv.get_int("time.count")};

  auto maps = std::make_shared<std::vector<std::shared_ptr<MappedFloats>>>();
  std::vector<std::span<const float>> views;
  for (std::size_t c = 0; c < catalog.n_in(); ++c) {
    const auto prefix = "channel." + std::to_string(c);
    if (kv.at(prefix + ".name") != catalog.channels()[c].name) {
      throw CatalogMismatch(dir.string() + ": channel " + std::to_string(c) + " name mismatch");
    }
    maps->push_back(MappedFloats::open(dir / kv.at(prefix + ".file")));
    views.push_back(maps->back()->values());
  }
  CacheContents out;
  out.store = FieldStore(std::move(catalog), std::move(grid), axis, std::move(views), maps);
  if (kv.contains("norm.mean")) {
    out.stats.mean = kv.get_doubles("norm.mean");
    out.stats.std = kv.get_doubles("norm.std");
  }
  out.manifest = std::move(kv);
  return out;
}

}  // namespace swinvrnn
