#include <doctest.h>
#include <torch/torch.h>

#include <cmath>
#include <numeric>
#include <random>

#include "swinvrnn/errors.hpp"
#include "swinvrnn/grid.hpp"
#include "swinvrnn/verification.hpp"

using namespace swinvrnn;

namespace {

std::vector<double> random_weights(std::int64_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::vector<double> w(static_cast<std::size_t>(h));
  for (auto& x : w) x = u(rng);
  return w;
}

double value_at(const torch::Tensor& t, std::int64_t i) { return t.reshape(-1)[i].item<double>(); }

}  // namespace

TEST_CASE("latitude weights for rows at 0 and 60 degrees") {
  GridSpec g;
  g.lat_deg = {0.0, 60.0};
  g.lon_deg = {0.0, 180.0};
  auto w = latitude_weights(g);
  CHECK(std::abs(w[0] - 4.0 / 3.0) <= 1e-12);
  CHECK(std::abs(w[1] - 2.0 / 3.0) <= 1e-12);
  auto full = latitude_weights(GridSpec::regular(32, 64));
  CHECK(std::abs(std::accumulate(full.begin(), full.end(), 0.0) / 32.0 - 1.0) <= 1e-12);
}

TEST_CASE("latitude weighted rmse") {
  const std::vector<double> w{4.0 / 3.0, 2.0 / 3.0};
  auto truth = torch::zeros({1, 2, 2}, torch::kFloat64);
  auto f = torch::tensor({1.0, 2.0, 3.0, 4.0}, torch::kFloat64).view({1, 2, 2});
  // sqrt((4/3 (1 + 4) + 2/3 (9 + 16)) / 4) = sqrt(35 / 6)
  CHECK(std::abs(lat_weighted_rmse(f, truth, w) - std::sqrt(35.0 / 6.0)) <= 1e-10);
  // Two cases: outer mean of per-case RMSEs.
  auto f2 = torch::cat({f, torch::full({1, 2, 2}, 2.0, torch::kFloat64)});
  const double expected = 0.5 * (std::sqrt(35.0 / 6.0) + 2.0);
  CHECK(std::abs(lat_weighted_rmse(f2, torch::zeros({2, 2, 2}, torch::kFloat64), w) - expected) <= 1e-10);
  CHECK(lat_weighted_rmse(f, f, w) == 0.0);

  auto row = torch::randn({3, 1, 7}, torch::kFloat64), row_t = torch::randn({3, 1, 7}, torch::kFloat64);
  double plain = 0.0;
  for (std::int64_t i = 0; i < 3; ++i) plain += (row[i] - row_t[i]).pow(2).mean().sqrt().item<double>();
  CHECK(lat_weighted_rmse(row, row_t, {1.0}) == doctest::Approx(plain / 3.0).epsilon(1e-15));

  // Naive loops.
  auto a = torch::randn({4, 5, 6}, torch::kFloat64), b = torch::randn({4, 5, 6}, torch::kFloat64);
  auto ww = random_weights(5, 1);
  double oracle = 0.0;
  for (std::int64_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < 5; ++j) {
      for (std::int64_t k = 0; k < 6; ++k) {
        const double d = a[i][j][k].item<double>() - b[i][j][k].item<double>();
        s += ww[static_cast<std::size_t>(j)] * d * d;
      }
    }
    oracle += std::sqrt(s / 30.0);
  }
  oracle /= 4.0;
  CHECK(std::abs(lat_weighted_rmse(a, b, ww) - oracle) <= 1e-7 * oracle);
  CHECK_THROWS_AS(lat_weighted_rmse(a, b, {1.0}), GeometryError);
  CHECK_THROWS_AS(lat_weighted_rmse(a, b.narrow(0, 0, 2), ww), ShapeError);
}

TEST_CASE("anomaly correlation") {
  auto clim = torch::randn({5, 6}, torch::kFloat64);
  auto truth = torch::randn({3, 5, 6}, torch::kFloat64);
  auto w = random_weights(5, 2);
  CHECK(acc(truth, truth, clim, w) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(acc(2.0 * clim - truth, truth, clim, w) == doctest::Approx(-1.0).epsilon(1e-14));
  auto f = torch::randn({3, 5, 6}, torch::kFloat64);
  double oracle = 0.0;
  for (std::int64_t i = 0; i < 3; ++i) {
    double num = 0.0, ff = 0.0, tt = 0.0;
    for (std::int64_t j = 0; j < 5; ++j) {
      for (std::int64_t k = 0; k < 6; ++k) {
        const double fa = f[i][j][k].item<double>() - clim[j][k].item<double>();
        const double ta = truth[i][j][k].item<double>() - clim[j][k].item<double>();
        const double wj = w[static_cast<std::size_t>(j)];
        num += wj * fa * ta;
        ff += wj * fa * fa;
        tt += wj * ta * ta;
      }
    }
    oracle += num / std::sqrt(ff * tt);
  }
  oracle /= 3.0;
  const double got = acc(f, truth, clim, w);
  CHECK(std::abs(got - oracle) <= 1e-7);
  CHECK(got >= -1.0);
  CHECK(got <= 1.0);
  // Scaling both anomalies by a positive constant.
  CHECK(acc(clim + 3.5 * (f - clim), clim + 3.5 * (truth - clim), clim, w) == doctest::Approx(got).epsilon(1e-12));
  CHECK(std::isnan(acc(clim.expand({2, 5, 6}), truth.narrow(0, 0, 2), clim, w)));
}

TEST_CASE("crps closed forms") {
  const std::vector<double> one{1.0};
  auto y = torch::full({1, 1}, 0.5, torch::kFloat64);
  auto pair = torch::tensor({0.0, 1.0}, torch::kFloat64).view({2, 1, 1});
  CHECK(crps_ensemble(pair, y, one) == 0.25);
  CHECK(crps_ensemble(pair, y, one, /*fair=*/true) == 0.0);
  CHECK(crps_ensemble(torch::full({4, 1, 1}, 0.5, torch::kFloat64), y, one) == 0.0);

  auto w = random_weights(4, 3);
  auto single = torch::randn({1, 2, 4, 5}, torch::kFloat64);
  auto truth = torch::randn({2, 4, 5}, torch::kFloat64);
  auto wt = torch::tensor(w, torch::kFloat64).view({-1, 1});
  const double mae = ((single[0] - truth).abs() * wt).mean({-2, -1}).mean().item<double>();
  CHECK(crps_ensemble(single, truth, w) == mae);
  CHECK(crps_ensemble(single, truth, w, true) == mae);
}

TEST_CASE("crps matches the pairwise definition") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = 1 + static_cast<std::int64_t>(rng() % 12);
    auto gen = at::make_generator<at::CPUGeneratorImpl>(rng());
    auto x = torch::randn({m, 3, 4}, gen, torch::kFloat64);
    auto y = torch::randn({3, 4}, gen, torch::kFloat64);
    auto cells = crps_cells(x, y);
    auto fair = crps_cells(x, y, true);
    for (std::int64_t c = 0; c < 12; ++c) {
      double skill = 0.0, pairs = 0.0;
      for (std::int64_t i = 0; i < m; ++i) {
        skill += std::abs(value_at(x[i], c) - value_at(y, c));
        for (std::int64_t j = 0; j < m; ++j) pairs += std::abs(value_at(x[i], c) - value_at(x[j], c));
      }
      const double md = static_cast<double>(m);
      const double expected = skill / md - pairs / (2.0 * md * md);
      CHECK(value_at(cells, c) == doctest::Approx(expected).epsilon(1e-12));
      CHECK(value_at(cells, c) >= 0.0);
      if (m > 1) CHECK(value_at(fair, c) == doctest::Approx(skill / md - pairs / (2.0 * md * (md - 1))).epsilon(1e-12));
    }
  }
}

TEST_CASE("moving a member toward the truth lowers crps") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x{n(rng), n(rng), n(rng), n(rng)};
    const double y = n(rng);
    auto score = [&](const std::vector<double>& v) {
      return crps_cells(torch::tensor(v, torch::kFloat64), torch::tensor(y, torch::kFloat64)).item<double>();
    };
    const double before = score(x);
    auto moved = x;
    moved[0] = x[0] + 0.5 * (y - x[0]);
    if (moved[0] == x[0]) continue;
    CHECK(score(moved) < before);
  }
}

TEST_CASE("rank histogram") {
  auto members = torch::rand({5, 40}, torch::kFloat64) + 1.0;
  auto counts = rank_histogram(members, torch::zeros({40}, torch::kFloat64));
  REQUIRE(counts.size() == 6);
  CHECK(counts[0] == 40);
  CHECK(rank_histogram(members, torch::full({40}, 9.0, torch::kFloat64))[5] == 40);

  const std::int64_t n = 10000, m = 9;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(77);
  auto ex = torch::randn({m, n}, gen, torch::kFloat64);
  auto truth = torch::randn({n}, gen, torch::kFloat64);
  auto hist = rank_histogram(ex, truth, 1);
  CHECK(std::accumulate(hist.begin(), hist.end(), std::int64_t{0}) == n);
  const double p = 0.1, bound = 4.0 * std::sqrt(n * p * (1 - p));
  for (auto c : hist) CHECK(std::abs(static_cast<double>(c) - n * p) <= bound);

  // Fully tied members spread the truth over all ranks.
  auto tied = rank_histogram(torch::zeros({3, 4000}, torch::kFloat64), torch::zeros({4000}, torch::kFloat64), 2);
  for (auto c : tied) CHECK(std::abs(c - 1000) < 4.0 * std::sqrt(4000 * 0.25 * 0.75));
  CHECK(tied == rank_histogram(torch::zeros({3, 4000}, torch::kFloat64), torch::zeros({4000}, torch::kFloat64), 2));

  CHECK(rank_chi_square({10, 10, 10}) == 0.0);
  CHECK(rank_chi_square({30, 0, 0}) == doctest::Approx(60.0));
}

TEST_CASE("spread diagnostics") {
  auto w = random_weights(4, 6);
  auto truth = torch::randn({3, 4, 5}, torch::kFloat64);
  auto one = torch::randn({1, 3, 4, 5}, torch::kFloat64);
  auto d1 = spread_diagnostics(one, truth, w);
  CHECK(torch::equal(d1.member_rmse[0], d1.mean_rmse));
  CHECK(d1.spread.abs().max().item<double>() == 0.0);

  auto same = torch::randn({1, 3, 4, 5}, torch::kFloat64).expand({6, -1, -1, -1});
  CHECK(spread_diagnostics(same, truth, w).spread.abs().max().item<double>() == 0.0);
  CHECK(ensemble_spread(same, w) == 0.0);

  for (int trial = 0; trial < 100; ++trial) {
    auto mem = torch::randn({7, 3, 4, 5}, torch::kFloat64);
    auto d = spread_diagnostics(mem, truth, w);
    CHECK((d.mean_rmse <= d.member_rmse.mean(0) + 1e-12).all().item<bool>());
  }
  auto fan = fan_at(one, truth, 2, 3);
  CHECK(fan.members.sizes() == torch::IntArrayRef{1, 3});
  CHECK(fan.truth[1].item<double>() == truth[1][2][3].item<double>());
  CHECK_THROWS_AS(fan_at(one, truth, 4, 0), GeometryError);
}

TEST_CASE("member sweep declines on average") {
  // Members scatter around the truth: the error of the mean shrinks with M.
  auto gen = at::make_generator<at::CPUGeneratorImpl>(9);
  auto truth = torch::randn({4, 6, 8}, gen, torch::kFloat64);
  auto members = truth + torch::randn({100, 4, 6, 8}, gen, torch::kFloat64);
  auto w = random_weights(6, 7);
  auto sweep = member_sweep(members, truth, w, {1, 2, 5, 10, 20, 50, 100, 400}, 20, 3);
  REQUIRE(sweep.size() == 7);
  CHECK(sweep.back().n_members == 100);
  const auto violations = monotone_violations(sweep);
  MESSAGE("member sweep monotone violations: " << violations);
  CHECK(violations == 0);
  CHECK((sweep.front().rmse > sweep.back().rmse).all().item<bool>());
}

TEST_CASE("score table csv") {
  ScoreTable t;
  t.add({"Z500", 120, "learned-distribution", 100, 409.0, 0.9, 200.5, 300.0});
  t.add({"Z500", 6, "learned-distribution", 100, 50.0, std::numeric_limits<double>::quiet_NaN(), 25.0, 20.0});
  t.add({"T850", 6, "control", 1, 1.5, 0.99, 1.0, 0.0});
  CHECK(t.rows()[0].field == "T850");
  CHECK(t.rows()[1].lead_hours == 6.0);
  auto text = t.csv();
  CHECK(text.rfind("field,lead_hours,method,n_members,rmse,acc,crps,spread\n", 0) == 0);
  auto back = ScoreTable::parse(text);
  REQUIRE(back.rows().size() == 3);
  CHECK(back.csv() == text);
  CHECK(std::isnan(back.find("Z500", "learned-distribution", 6)->acc));
  CHECK(!back.find("Z500", "control", 6));
  CHECK_THROWS_AS(ScoreTable::parse("bad header\n"), IoError);
  CHECK_THROWS_AS(ScoreTable::parse(std::string(ScoreTable::kHeader) + "\nZ500,6,x,1,abc,0,0,0\n"), IoError);
}
