#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace swinvrnn {

// Regular latitude-longitude grid. Rows are latitudes, columns longitudes.
struct GridSpec {
  std::vector<double> lat_deg;
  std::vector<double> lon_deg;
  double resolution_deg = 0.0;

  std::size_t n_lat() const { return lat_deg.size(); }
  std::size_t n_lon() const { return lon_deg.size(); }

  // Cell-centred global grid: latitudes -90 + res/2 .. 90 - res/2 ascending,
  // longitudes 0 .. 360 - res. `regular(32, 64)` is the 5.625 degree grid.
  static GridSpec regular(std::size_t n_lat, std::size_t n_lon);

  // Throws GeometryError when monotonicity, spacing or coverage fail.
  void validate() const;
  bool same_geometry(const GridSpec& other, double tol_deg = 1e-6) const;
};

// Per-row weights L(j) = cos(lat_j) / mean_j cos(lat_j).
std::vector<double> latitude_weights(const GridSpec& grid);

enum class VariableKind { kThreeD, kTwoD, kConstant };

const char* to_string(VariableKind kind);
VariableKind parse_variable_kind(const std::string& text);

struct VariableEntry {
  std::string name;        // e.g. "geopotential"
  VariableKind kind = VariableKind::kTwoD;
  std::vector<int> levels; // pressure levels in hPa; empty unless 3D
  std::string short_name;  // variable name inside archive files, e.g. "z"

  std::size_t n_levels() const { return kind == VariableKind::kThreeD ? levels.size() : 1; }
};

struct ChannelInfo {
  std::string name;   // "geopotential_500", "2m_temperature", ...
  std::size_t entry;  // index into VariableCatalog::entries()
  int level;          // -1 for single-level fields
  bool constant;
};

// Ordered channel layout of the input stack. Constant fields always occupy
// the trailing channels, so prognostic channels are [0, n_out).
class VariableCatalog {
 public:
  VariableCatalog() = default;
  explicit VariableCatalog(std::vector<VariableEntry> entries);

  // Five 3D variables on 13 levels, four 2D fields and two constants.
  static VariableCatalog weatherbench();
  // Two prognostic tracers and one static mask on toy grids.
  static VariableCatalog toy();

  const std::vector<VariableEntry>& entries() const { return entries_; }
  const std::vector<ChannelInfo>& channels() const { return channels_; }
  std::size_t n_in() const { return channels_.size(); }
  std::size_t n_out() const { return n_out_; }
  std::size_t channel_offset(const std::string& entry_name) const;
  std::optional<std::size_t> find_channel(const std::string& channel_name) const;
  std::size_t channel_index(const std::string& channel_name) const;

  // "name:kind:levels" items joined with ','; levels joined with '|'.
  std::string serialize() const;
  static VariableCatalog parse(const std::string& text);

 private:
  std::vector<VariableEntry> entries_;
  std::vector<ChannelInfo> channels_;
  std::map<std::string, std::size_t> offsets_;
  std::size_t n_out_ = 0;
};

// Channel naming used by verification: Z500, T850, T2M and TP.
std::vector<std::string> headline_channels(const VariableCatalog& catalog);

}  // namespace swinvrnn
