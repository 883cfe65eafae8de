#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace swinvrnn {

// All scores take fields whose last two axes are (lat, lon) and per-row
// latitude weights of length n_lat. Leading axes index forecast cases.
// Scores are accumulated in float64.

// Mean over cases of sqrt(mean_jk L(j) (f - t)^2).
double lat_weighted_rmse(const torch::Tensor& forecast, const torch::Tensor& truth, const std::vector<double>& weights);

// Per case sum L f' t' / sqrt(sum L f'^2 * sum L t'^2) with anomalies taken
// against `climatology` (broadcastable to truth), then averaged over cases.
// Cases with zero anomaly variance are skipped; NaN when none is defined.
double acc(const torch::Tensor& forecast, const torch::Tensor& truth, const torch::Tensor& climatology,
           const std::vector<double>& weights);

// Per-cell CRPS of members [M, ...] against truth [...]:
// mean_i |X_i - y| - sum_ij |X_i - X_j| / (2 M^2), or / (2 M (M - 1)) when fair.
torch::Tensor crps_cells(const torch::Tensor& members, const torch::Tensor& truth, bool fair = false);
// Latitude-weighted mean of crps_cells over cells and cases.
double crps_ensemble(const torch::Tensor& members, const torch::Tensor& truth, const std::vector<double>& weights,
                     bool fair = false);

// Ensemble spread: sqrt of the latitude-weighted mean member variance
// (denominator M - 1; 0 for a single member), averaged over cases.
double ensemble_spread(const torch::Tensor& members, const std::vector<double>& weights);

// Counts of the truth's rank among M members, M + 1 bins. members [M, N],
// truth [N]; ties get a uniformly random rank among the tied positions.
std::vector<std::int64_t> rank_histogram(const torch::Tensor& members, const torch::Tensor& truth,
                                         std::uint64_t seed = 0);
// Pearson chi-square of counts against the uniform histogram.
double rank_chi_square(const std::vector<std::int64_t>& counts);

struct SpreadDiagnostics {
  torch::Tensor member_rmse;  // [M, T] each member's RMSE per lead
  torch::Tensor mean_rmse;    // [T] RMSE of the ensemble mean
  torch::Tensor spread;       // [T]
};
// members [M, T, H, W], truth [T, H, W].
SpreadDiagnostics spread_diagnostics(const torch::Tensor& members, const torch::Tensor& truth,
                                     const std::vector<double>& weights);

struct FanData {
  std::int64_t row = 0;
  std::int64_t col = 0;
  torch::Tensor members;  // [M, T]
  torch::Tensor truth;    // [T]
};
FanData fan_at(const torch::Tensor& members, const torch::Tensor& truth, std::int64_t row, std::int64_t col);

struct SweepPoint {
  std::int64_t n_members = 0;
  torch::Tensor rmse;  // [T] mean over draws of RMSE(mean of a random n-member subset)
};
// members [M, T, H, W]; counts above M are dropped. Draws subsets without
// replacement from a seeded stream.
std::vector<SweepPoint> member_sweep(const torch::Tensor& members, const torch::Tensor& truth,
                                     const std::vector<double>& weights, const std::vector<std::int64_t>& counts,
                                     std::int64_t draws, std::uint64_t seed);
// Adjacent pairs (per lead) where the larger subset scored worse.
std::int64_t monotone_violations(const std::vector<SweepPoint>& sweep);

struct ScoreRow {
  std::string field;
  double lead_hours = 0.0;
  std::string method;
  std::int64_t n_members = 1;
  double rmse = 0.0;
  double acc = std::numeric_limits<double>::quiet_NaN();
  double crps = 0.0;
  double spread = 0.0;
};

class ScoreTable {
 public:
  static constexpr const char* kHeader = "field,lead_hours,method,n_members,rmse,acc,crps,spread";

  void add(ScoreRow row);
  // Rows ordered by field, method, then ascending lead.
  const std::vector<ScoreRow>& rows() const { return rows_; }
  std::optional<ScoreRow> find(const std::string& field, const std::string& method, double lead_hours) const;

  std::string csv() const;
  void write(const std::filesystem::path& path) const;
  static ScoreTable parse(const std::string& text);
  static ScoreTable read(const std::filesystem::path& path);

 private:
  std::vector<ScoreRow> rows_;
};

}  // namespace swinvrnn
