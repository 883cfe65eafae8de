#include "swinvrnn/verification.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "swinvrnn/errors.hpp"
#include "swinvrnn/key_value.hpp"
#include "swinvrnn/noise.hpp"
#include "swinvrnn/tensor_io.hpp"

namespace swinvrnn {

namespace {

torch::Tensor weight_column(const std::vector<double>& weights, const torch::Tensor& field) {
  if (field.dim() < 2) throw ShapeError("scores need fields with (lat, lon) as the last two axes");
  if (static_cast<std::int64_t>(weights.size()) != field.size(-2)) {
    throw GeometryError("latitude weights cover " + std::to_string(weights.size()) + " rows, field has " +
                        std::to_string(field.size(-2)));
  }
  return torch::tensor(weights, torch::kFloat64).view({-1, 1});
}

void check_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_text(a.sizes()) + " and " + shape_text(b.sizes()) +
                     " differ");
  }
}

// [cases, H, W] view in float64.
torch::Tensor as_cases(const torch::Tensor& x) {
  return x.to(torch::kFloat64).reshape({-1, x.size(-2), x.size(-1)});
}

// Weighted spatial mean per case: [cases, H, W] -> [cases].
torch::Tensor spatial_mean(const torch::Tensor& x, const torch::Tensor& w) { return (x * w).mean({-2, -1}); }

}  // namespace

double lat_weighted_rmse(const torch::Tensor& forecast, const torch::Tensor& truth, const std::vector<double>& weights) {
  check_same(forecast, truth, "lat_weighted_rmse");
  auto w = weight_column(weights, truth);
  auto err = (as_cases(forecast) - as_cases(truth)).pow(2);
  return spatial_mean(err, w).sqrt().mean().item<double>();
}

double acc(const torch::Tensor& forecast, const torch::Tensor& truth, const torch::Tensor& climatology,
           const std::vector<double>& weights) {
  check_same(forecast, truth, "acc");
  auto w = weight_column(weights, truth);
  auto clim = climatology.to(torch::kFloat64).expand(truth.sizes());
  auto fa = as_cases(forecast) - as_cases(clim);
  auto ta = as_cases(truth) - as_cases(clim);
  auto num = (w * fa * ta).sum({-2, -1});
  auto den = ((w * fa.pow(2)).sum({-2, -1}) * (w * ta.pow(2)).sum({-2, -1})).sqrt();
  auto defined = den > 0;
  if (!defined.any().item<bool>()) return std::numeric_limits<double>::quiet_NaN();
  return (num.masked_select(defined) / den.masked_select(defined)).mean().item<double>();
}

torch::Tensor crps_cells(const torch::Tensor& members, const torch::Tensor& truth, bool fair) {
  if (members.dim() < 1 || members.size(0) < 1) throw PreconditionError("CRPS needs at least one member");
  if (members.sizes().slice(1) != truth.sizes()) {
    throw ShapeError("CRPS: members " + shape_text(members.sizes()) + " do not match truth " +
                     shape_text(truth.sizes()));
  }
  auto x = members.to(torch::kFloat64);
  const auto m = x.size(0);
  auto skill = (x - truth.to(torch::kFloat64)).abs().mean(0);
  if (m == 1) return skill;
  // sum_ij |X_i - X_j| = 2 sum_i (2i - M + 1) X_(i) over the sorted members.
  auto sorted = std::get<0>(x.sort(0));
  auto coef = (2.0 * torch::arange(m, torch::kFloat64) - static_cast<double>(m - 1));
  std::vector<std::int64_t> shape(static_cast<std::size_t>(x.dim()), 1);
  shape[0] = m;
  auto pair_sum = 2.0 * (sorted * coef.view(shape)).sum(0);
  const double denom = fair ? 2.0 * m * (m - 1) : 2.0 * m * m;
  return skill - pair_sum / denom;
}

double crps_ensemble(const torch::Tensor& members, const torch::Tensor& truth, const std::vector<double>& weights,
                     bool fair) {
  auto cells = crps_cells(members, truth, fair);
  auto w = weight_column(weights, truth);
  return spatial_mean(as_cases(cells), w).mean().item<double>();
}

double ensemble_spread(const torch::Tensor& members, const std::vector<double>& weights) {
  if (members.dim() < 3 || members.size(0) < 1) throw ShapeError("spread needs members [M, ..., H, W]");
  if (members.size(0) == 1) return 0.0;
  auto w = weight_column(weights, members);
  auto var = members.to(torch::kFloat64).var(0, /*unbiased=*/true);
  return spatial_mean(as_cases(var), w).sqrt().mean().item<double>();
}

std::vector<std::int64_t> rank_histogram(const torch::Tensor& members, const torch::Tensor& truth,
                                         std::uint64_t seed) {
  if (members.dim() != 2 || truth.dim() != 1 || members.size(1) != truth.size(0)) {
    throw ShapeError("rank histogram expects members [M, N] and truth [N]");
  }
  if (members.size(0) < 1) throw PreconditionError("rank histogram needs at least one member");
  const auto m = members.size(0);
  auto x = members.to(torch::kFloat64);
  auto y = truth.to(torch::kFloat64).unsqueeze(0);
  auto below = (x < y).sum(0).contiguous();
  auto ties = (x == y).sum(0).contiguous();
  const auto* b = below.data_ptr<std::int64_t>();
  const auto* t = ties.data_ptr<std::int64_t>();
  std::vector<std::int64_t> counts(static_cast<std::size_t>(m + 1), 0);
  std::mt19937_64 rng(mix_seed(seed));
  for (std::int64_t i = 0; i < truth.size(0); ++i) {
    auto rank = b[i];
    if (t[i] > 0) rank += std::uniform_int_distribution<std::int64_t>(0, t[i])(rng);
    ++counts[static_cast<std::size_t>(rank)];
  }
  return counts;
}

double rank_chi_square(const std::vector<std::int64_t>& counts) {
  if (counts.empty()) throw PreconditionError("empty rank histogram");
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
  if (total == 0.0) throw PreconditionError("rank histogram holds no cases");
  const double expected = total / static_cast<double>(counts.size());
  double chi = 0.0;
  for (auto c : counts) chi += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  return chi;
}

SpreadDiagnostics spread_diagnostics(const torch::Tensor& members, const torch::Tensor& truth,
                                     const std::vector<double>& weights) {
  if (members.dim() != 4 || truth.dim() != 3 || members.sizes().slice(1) != truth.sizes()) {
    throw ShapeError("spread diagnostics expect members [M, T, H, W] and truth [T, H, W]");
  }
  auto w = weight_column(weights, truth);
  auto x = members.to(torch::kFloat64);
  auto y = truth.to(torch::kFloat64);
  SpreadDiagnostics out;
  out.member_rmse = ((x - y).pow(2) * w).mean({-2, -1}).sqrt();
  out.mean_rmse = ((x.mean(0) - y).pow(2) * w).mean({-2, -1}).sqrt();
  out.spread = x.size(0) == 1 ? torch::zeros({x.size(1)}, torch::kFloat64)
                              : (x.var(0, /*unbiased=*/true) * w).mean({-2, -1}).sqrt();
  return out;
}

FanData fan_at(const torch::Tensor& members, const torch::Tensor& truth, std::int64_t row, std::int64_t col) {
  if (members.dim() != 4 || truth.dim() != 3) throw ShapeError("fan data expects members [M, T, H, W]");
  if (row < 0 || row >= truth.size(1) || col < 0 || col >= truth.size(2)) {
    throw GeometryError("fan location (" + std::to_string(row) + ", " + std::to_string(col) + ") is off the grid");
  }
  return {row, col, members.select(3, col).select(2, row).to(torch::kFloat64),
          truth.select(2, col).select(1, row).to(torch::kFloat64)};
}

std::vector<SweepPoint> member_sweep(const torch::Tensor& members, const torch::Tensor& truth,
                                     const std::vector<double>& weights, const std::vector<std::int64_t>& counts,
                                     std::int64_t draws, std::uint64_t seed) {
  if (members.dim() != 4 || members.size(0) < 1) throw PreconditionError("member sweep needs a non-empty ensemble");
  if (draws < 1) throw PreconditionError("member sweep needs at least one draw");
  auto w = weight_column(weights, truth);
  auto x = members.to(torch::kFloat64);
  auto y = truth.to(torch::kFloat64);
  const auto m = x.size(0);
  std::mt19937_64 rng(mix_seed(seed));
  std::vector<std::int64_t> order(static_cast<std::size_t>(m));
  std::vector<SweepPoint> out;
  for (auto n : counts) {
    if (n < 1 || n > m) continue;
    auto acc_rmse = torch::zeros({x.size(1)}, torch::kFloat64);
    for (std::int64_t d = 0; d < draws; ++d) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      auto idx = torch::tensor(std::vector<std::int64_t>(order.begin(), order.begin() + n), torch::kLong);
      auto mean = x.index_select(0, idx).mean(0);
      acc_rmse += ((mean - y).pow(2) * w).mean({-2, -1}).sqrt();
    }
    out.push_back({n, acc_rmse / static_cast<double>(draws)});
  }
  return out;
}

std::int64_t monotone_violations(const std::vector<SweepPoint>& sweep) {
  std::int64_t count = 0;
  for (std::size_t i = 1; i < sweep.size(); ++i) count += (sweep[i].rmse > sweep[i - 1].rmse).sum().item<std::int64_t>();
  return count;
}

void ScoreTable::add(ScoreRow row) {
  rows_.push_back(std::move(row));
  std::stable_sort(rows_.begin(), rows_.end(), [](const ScoreRow& a, const ScoreRow& b) {
    return std::tie(a.field, a.method, a.lead_hours) < std::tie(b.field, b.method, b.lead_hours);
  });
}

std::optional<ScoreRow> ScoreTable::find(const std::string& field, const std::string& method,
                                         double lead_hours) const {
  for (const auto& r : rows_) {
    if (r.field == field && r.method == method && r.lead_hours == lead_hours) return r;
  }
  return std::nullopt;
}

namespace {

std::string number_text(double v) { return std::isnan(v) ? "nan" : format_number(v); }

double parse_number(const std::string& text, std::size_t line) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw IoError("score table line " + std::to_string(line) + ": '" + text + "' is not a number");
}

}  // namespace

std::string ScoreTable::csv() const {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : rows_) {
    out += r.field + "," + number_text(r.lead_hours) + "," + r.method + "," + std::to_string(r.n_members) + "," +
           number_text(r.rmse) + "," + number_text(r.acc) + "," + number_text(r.crps) + "," + number_text(r.spread) +
           "\n";
  }
  return out;
}

void ScoreTable::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write score table " + path.string());
  out << csv();
  if (!out) throw IoError("failed writing score table " + path.string());
}

ScoreTable ScoreTable::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw IoError("score table must start with '" + std::string(kHeader) + "'");
  }
  ScoreTable table;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto parts = split_list(line);
    if (parts.size() != 8) throw IoError("score table line " + std::to_string(n) + " needs 8 fields");
    ScoreRow r;
    r.field = parts[0];
    r.lead_hours = parse_number(parts[1], n);
    r.method = parts[2];
    r.n_members = static_cast<std::int64_t>(parse_number(parts[3], n));
    r.rmse = parse_number(parts[4], n);
    r.acc = parse_number(parts[5], n);
    r.crps = parse_number(parts[6], n);
    r.spread = parse_number(parts[7], n);
    table.add(std::move(r));
  }
  return table;
}

ScoreTable ScoreTable::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read score table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace swinvrnn
