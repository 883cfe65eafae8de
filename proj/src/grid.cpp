#include "swinvrnn/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

GridSpec GridSpec::regular(std::size_t n_lat, std::size_t n_lon) {
  if (n_lat == 0 || n_lon == 0) throw GeometryError("grid must have at least one row and column");
  GridSpec g;
  g.resolution_deg = 360.0 / static_cast<double>(n_lon);
  const double lat_step = 180.0 / static_cast<double>(n_lat);
  for (std::size_t j = 0; j < n_lat; ++j) {
    g.lat_deg.push_back(-90.0 + lat_step * (static_cast<double>(j) + 0.5));
  }
  for (std::size_t i = 0; i < n_lon; ++i) {
    g.lon_deg.push_back(g.resolution_deg * static_cast<double>(i));
  }
  return g;
}

void GridSpec::validate() const {
  if (lat_deg.empty() || lon_deg.empty()) throw GeometryError("grid has no rows or columns");
  for (double lat : lat_deg) {
    if (!(lat >= -90.0 && lat <= 90.0)) throw GeometryError("latitude outside [-90, 90]");
  }
  for (double lon : lon_deg) {
    if (!(lon >= 0.0 && lon < 360.0)) throw GeometryError("longitude outside [0, 360)");
  }
  if (lat_deg.size() > 1) {
    const bool up = lat_deg[1] > lat_deg[0];
    for (std::size_t j = 1; j < lat_deg.size(); ++j) {
      if ((lat_deg[j] > lat_deg[j - 1]) != up || lat_deg[j] == lat_deg[j - 1]) {
        throw GeometryError("latitudes are not strictly monotone");
      }
    }
  }
  if (lon_deg.size() > 1) {
    const double step = lon_deg[1] - lon_deg[0];
    if (step <= 0.0) throw GeometryError("longitudes are not strictly increasing");
    for (std::size_t i = 1; i < lon_deg.size(); ++i) {
      if (std::abs((lon_deg[i] - lon_deg[i - 1]) - step) > 1e-6 * std::max(1.0, step)) {
        throw GeometryError("longitude spacing is not uniform");
      }
    }
  }
  if (resolution_deg <= 0.0) throw GeometryError("non-positive grid resolution");
  // Global grids only; single-row toy grids are exempt from the coverage check.
  if (lat_deg.size() > 1 &&
      std::abs(static_cast<double>(lat_deg.size()) * resolution_deg - 180.0) > resolution_deg + 1e-9) {
    throw GeometryError("n_lat * resolution does not cover 180 degrees");
  }
}

bool GridSpec::same_geometry(const GridSpec& other, double tol_deg) const {
  if (n_lat() != other.n_lat() || n_lon() != other.n_lon()) return false;
  for (std::size_t j = 0; j < n_lat(); ++j) {
    if (std::abs(lat_deg[j] - other.lat_deg[j]) > tol_deg) return false;
  }
  for (std::size_t i = 0; i < n_lon(); ++i) {
    if (std::abs(lon_deg[i] - other.lon_deg[i]) > tol_deg) return false;
  }
  return true;
}

std::vector<double> latitude_weights(const GridSpec& grid) {
  std::vector<double> w(grid.n_lat());
  double sum = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = std::cos(grid.lat_deg[j] * std::numbers::pi / 180.0);
    sum += w[j];
  }
  if (!(sum > 0.0)) throw GeometryError("latitude weights undefined: rows sit on the poles");
  const double mean = sum / static_cast<double>(w.size());
  for (double& v : w) v /= mean;
  return w;
}

const char* to_string(VariableKind kind) {
  switch (kind) {
    case VariableKind::kThreeD: return "3d";
    case VariableKind::kTwoD: return "2d";
    case VariableKind::kConstant: return "constant";
  }
  return "?";
}

VariableKind parse_variable_kind(const std::string& text) {
  if (text == "3d" || text == "3D") return VariableKind::kThreeD;
  if (text == "2d" || text == "2D") return VariableKind::kTwoD;
  if (text == "constant") return VariableKind::kConstant;
  throw ConfigError("unknown variable kind '" + text + "'");
}

VariableCatalog::VariableCatalog(std::vector<VariableEntry> entries) {
  std::stable_partition(entries.begin(), entries.end(),
                        [](const VariableEntry& e) { return e.kind != VariableKind::kConstant; });
  entries_ = std::move(entries);
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    const auto& entry = entries_[e];
    if (entry.name.empty()) throw ConfigError("catalog entry without a name");
    if (entry.kind == VariableKind::kThreeD && entry.levels.empty()) {
      throw ConfigError("3D variable '" + entry.name + "' has no levels");
    }
    if (!offsets_.emplace(entry.name, channels_.size()).second) {
      throw ConfigError("duplicate catalog entry '" + entry.name + "'");
    }
    const bool constant = entry.kind == VariableKind::kConstant;
    if (entry.kind == VariableKind::kThreeD) {
      for (int level : entry.levels) {
        channels_.push_back({entry.name + "_" + std::to_string(level), e, level, false});
      }
    } else {
      channels_.push_back({entry.name, e, -1, constant});
    }
    if (!constant) n_out_ = channels_.size();
  }
}

VariableCatalog VariableCatalog::weatherbench() {
  const std::vector<int> levels{50, 100, 150, 200, 250, 300, 400, 500, 600, 700, 850, 925, 1000};
  return VariableCatalog({
      {"geopotential", VariableKind::kThreeD, levels, "z"},
      {"temperature", VariableKind::kThreeD, levels, "t"},
      {"relative_humidity", VariableKind::kThreeD, levels, "r"},
      {"u_component_of_wind", VariableKind::kThreeD, levels, "u"},
      {"v_component_of_wind", VariableKind::kThreeD, levels, "v"},
      {"2m_temperature", VariableKind::kTwoD, {}, "t2m"},
      {"10m_u_component_of_wind", VariableKind::kTwoD, {}, "u10"},
      {"10m_v_component_of_wind", VariableKind::kTwoD, {}, "v10"},
      {"total_precipitation", VariableKind::kTwoD, {}, "tp"},
      {"land_binary_mask", VariableKind::kConstant, {}, "lsm"},
      {"orography", VariableKind::kConstant, {}, "orography"},
  });
}

VariableCatalog VariableCatalog::toy() {
  return VariableCatalog({
      {"tracer_a", VariableKind::kTwoD, {}, "a"},
      {"tracer_b", VariableKind::kTwoD, {}, "b"},
      {"static_mask", VariableKind::kConstant, {}, "mask"},
  });
}

std::size_t VariableCatalog::channel_offset(const std::string& entry_name) const {
  auto it = offsets_.find(entry_name);
  if (it == offsets_.end()) throw CatalogMismatch("catalog has no variable '" + entry_name + "'");
  return it->second;
}

std::optional<std::size_t> VariableCatalog::find_channel(const std::string& channel_name) const {
  for (std::size_t c = 0; c < channels_.size(); ++c) {
    if (channels_[c].name == channel_name) return c;
  }
  return std::nullopt;
}

std::size_t VariableCatalog::channel_index(const std::string& channel_name) const {
  auto c = find_channel(channel_name);
  if (!c) throw CatalogMismatch("catalog has no channel '" + channel_name + "'");
  return *c;
}

std::string VariableCatalog::serialize() const {
  std::ostringstream out;
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    const auto& entry = entries_[e];
    if (e) out << ',';
    out << entry.name << ':' << to_string(entry.kind) << ':' << entry.short_name << ':';
    for (std::size_t l = 0; l < entry.levels.size(); ++l) {
      if (l) out << '|';
      out << entry.levels[l];
    }
  }
  return out.str();
}

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

VariableCatalog VariableCatalog::parse(const std::string& text) {
  std::vector<VariableEntry> entries;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 4) throw ConfigError("malformed catalog item '" + item + "'");
    VariableEntry entry{parts[0], parse_variable_kind(parts[1]), {}, parts[2]};
    if (!parts[3].empty()) {
      for (const auto& lvl : split(parts[3], '|')) entry.levels.push_back(std::stoi(lvl));
    }
    entries.push_back(std::move(entry));
  }
  return VariableCatalog(std::move(entries));
}

std::vector<std::string> headline_channels(const VariableCatalog& catalog) {
  std::vector<std::string> out;
  for (const char* name : {"geopotential_500", "temperature_850", "2m_temperature", "total_precipitation"}) {
    if (catalog.find_channel(name)) out.emplace_back(name);
  }
  if (out.empty()) {
    for (std::size_t c = 0; c < catalog.n_out(); ++c) out.push_back(catalog.channels()[c].name);
  }
  return out;
}

}  // namespace swinvrnn
