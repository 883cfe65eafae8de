#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <unistd.h>

#include "support/netcdf_writer.hpp"
#include "support/toy_data.hpp"
#include "swinvrnn/archive.hpp"
#include "swinvrnn/climatology.hpp"
#include "swinvrnn/errors.hpp"
#include "swinvrnn/netcdf.hpp"

using namespace swinvrnn;
using namespace swinvrnn::testing;
namespace fs = std::filesystem;
using namespace std::chrono;

namespace {

// ISO week via the "week 1 holds January 4th" rule.
int iso_week_oracle(sys_days d) {
  auto week_one_monday = [](int y) {
    const sys_days jan4 = sys_days{year{y} / January / 4};
    return jan4 - days{weekday{jan4}.iso_encoding() - 1};
  };
  int y = static_cast<int>(year_month_day{d}.year());
  if (d >= week_one_monday(y + 1)) ++y;
  if (d < week_one_monday(y)) --y;
  return static_cast<int>((d - week_one_monday(y)).count() / 7 + 1);
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("swinvrnn_grids_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Channel 0 is `a` everywhere when `flat_a`, else a + (i % 3); channel 1
// cycles b + (i % 7); the mask is 5.
FieldStore constant_store(std::size_t n_lat, std::size_t n_lon, std::int64_t n_times, float a, float b,
                          bool flat_a = false) {
  const auto hw = n_lat * n_lon;
  std::vector<std::vector<float>> ch(3);
  ch[0].resize(static_cast<std::size_t>(n_times) * hw);
  for (std::size_t i = 0; i < ch[0].size(); ++i) ch[0][i] = flat_a ? a : a + static_cast<float>(i % 3);
  ch[1].resize(static_cast<std::size_t>(n_times) * hw);
  for (std::size_t i = 0; i < ch[1].size(); ++i) ch[1][i] = b + static_cast<float>(i % 7);
  ch[2].assign(hw, 5.0f);
  return FieldStore::from_buffers(VariableCatalog::toy(), GridSpec::regular(n_lat, n_lon),
                                  TimeAxis{make_time(2015, 1, 1), 6, n_times}, std::move(ch));
}

}  // namespace

TEST_CASE("calendar: 6-hourly axis over two years") {
  const auto range = TimeRange::years(2015, 2016);
  std::vector<TimePoint> oracle;
  for (sys_days d = sys_days{year{2015} / January / 1}; d <= sys_days{year{2016} / December / 31}; d += days{1}) {
    for (int h : {0, 6, 12, 18}) oracle.push_back(d + hours{h});
  }
  CHECK(oracle.size() == 2924);
  TimeAxis axis{make_time(2014, 12, 1), 6, 4 * 800};
  const auto [lo, hi] = axis.span_of(range);
  REQUIRE(hi - lo == 2924);
  for (std::int64_t i = lo; i < hi; ++i) CHECK(axis.at(i) == oracle[static_cast<std::size_t>(i - lo)]);
  CHECK(range.contains(make_time(2016, 12, 31, 18)));
  CHECK_FALSE(range.contains(make_time(2017, 1, 1)));
  CHECK(axis.index_of(make_time(2015, 1, 1)) == lo);
  CHECK(axis.index_of(make_time(2015, 1, 1, 3)) == -1);
  CHECK(axis.index_of(make_time(2030, 1, 1)) == -1);
}

TEST_CASE("calendar: ISO weeks match an independent rule") {
  for (sys_days d = sys_days{year{1999} / January / 1}; d <= sys_days{year{2021} / December / 31}; d += days{1}) {
    const int w = iso_week(d + hours{12});
    REQUIRE(w == iso_week_oracle(d));
    CHECK(climatology_week_index(d) == std::min(w, 52) - 1);
  }
  CHECK(iso_week(make_time(2015, 12, 31)) == 53);
  CHECK(climatology_week_index(make_time(2015, 12, 31)) == 51);
  CHECK(iso_week(make_time(2021, 1, 1)) == 53);  // belongs to 2020's last week
  CHECK(iso_week(make_time(2019, 12, 30)) == 1);
}

TEST_CASE("calendar: parsing and CF units") {
  const auto t = make_time(2016, 2, 29, 18);
  CHECK(parse_time(format_time(t)) == t);
  CHECK(parse_time("2016-02-29") == make_time(2016, 2, 29));
  CHECK(parse_time("2016-02-29T18:00") == t);
  CHECK(parse_time("2016-02-29 18:00:00") == t);
  CHECK(parse_time("2016-02-29T18:00:00Z") == t);
  CHECK_THROWS(parse_time("2016-02-30"));
  CHECK_THROWS(parse_time("yesterday"));

  auto u = CfTimeUnits::parse("hours since 1979-01-01");
  CHECK(u.to_time(6.0) == make_time(1979, 1, 1, 6));
  auto d = CfTimeUnits::parse("days since 2000-01-01 00:00:00");
  CHECK(d.to_time(1.25) == make_time(2000, 1, 2, 6));
  CHECK_THROWS(CfTimeUnits::parse("fortnights since 2000-01-01"));
}

TEST_CASE("grid: regular geometry and latitude weights") {
  const auto g = GridSpec::regular(32, 64);
  CHECK(g.resolution_deg == doctest::Approx(5.625));
  CHECK(g.lat_deg.front() == doctest::Approx(-87.1875));
  CHECK(g.lat_deg.back() == doctest::Approx(87.1875));
  CHECK(g.lon_deg.back() == doctest::Approx(354.375));
  g.validate();
  const auto w = latitude_weights(g);
  CHECK(std::accumulate(w.begin(), w.end(), 0.0) / w.size() == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t j = 0; j < w.size(); ++j) {
    CHECK(w[j] > 0.0);
    CHECK(w[j] == doctest::Approx(w[w.size() - 1 - j]));  // symmetric about the equator
  }
  CHECK(w[16] > w[0]);

  auto two = GridSpec::regular(2, 4);
  auto w2 = latitude_weights(two);
  CHECK(w2[0] == doctest::Approx(1.0));  // +-45 degrees: equal weights

  auto bad = g;
  std::swap(bad.lat_deg[3], bad.lat_deg[4]);
  CHECK_THROWS_AS(bad.validate(), GeometryError);
  bad = g;
  bad.lon_deg[10] += 1.0;
  CHECK_THROWS_AS(bad.validate(), GeometryError);
  bad = g;
  bad.lat_deg[0] = -95.0;
  CHECK_THROWS_AS(bad.validate(), GeometryError);
  CHECK(g.same_geometry(GridSpec::regular(32, 64)));
  CHECK_FALSE(g.same_geometry(GridSpec::regular(16, 32)));
}

TEST_CASE("catalog: channel layout") {
  const auto wb = VariableCatalog::weatherbench();
  CHECK(wb.n_in() == 71);
  CHECK(wb.n_out() == 69);
  std::size_t expected = 0;
  for (const auto& e : wb.entries()) {
    CHECK(wb.channel_offset(e.name) == expected);
    expected += e.n_levels();
  }
  CHECK(expected == wb.n_in());
  for (std::size_t c = 0; c < wb.n_in(); ++c) CHECK(wb.channels()[c].constant == (c >= wb.n_out()));
  const auto round = VariableCatalog::parse(wb.serialize());
  CHECK(round.serialize() == wb.serialize());
  CHECK(round.n_in() == 71);
  CHECK(headline_channels(wb).size() == 4);
  CHECK_THROWS_AS(wb.channel_offset("nope"), CatalogMismatch);

  const auto toy = VariableCatalog::toy();
  CHECK(toy.n_in() == 3);
  CHECK(toy.n_out() == 2);
  CHECK(toy.channels()[2].constant);
}

TEST_CASE("norm stats: constants, iid normals, round trip") {
  auto store = constant_store(4, 8, 20, 3.0f, 1.0f);
  const auto stats = compute_norm_stats(store, full_range(store));
  CHECK(stats.mean[2] == doctest::Approx(5.0));
  CHECK(stats.std[2] == doctest::Approx(1.0));

  auto flat = constant_store(4, 8, 20, 3.0f, 1.0f, true);
  CHECK_THROWS_AS(compute_norm_stats(flat, full_range(flat)), DegenerateStatistics);

  const std::size_t hw = 16 * 32;
  const std::int64_t n_t = 100;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> a(2.0, 3.0), b(-1.0, 0.5);
  std::vector<std::vector<float>> ch(3);
  for (std::size_t i = 0; i < hw * n_t; ++i) {
    ch[0].push_back(static_cast<float>(a(rng)));
    ch[1].push_back(static_cast<float>(b(rng)));
  }
  ch[2].assign(hw, 1.0f);
  auto noisy = FieldStore::from_buffers(VariableCatalog::toy(), GridSpec::regular(16, 32),
                                        TimeAxis{make_time(2015, 1, 1), 6, n_t}, std::move(ch));
  const auto s = compute_norm_stats(noisy, full_range(noisy));
  const double n = static_cast<double>(hw * n_t);
  CHECK(std::abs(s.mean[0] - 2.0) < 4.0 * 3.0 / std::sqrt(n));
  CHECK(std::abs(s.mean[1] + 1.0) < 4.0 * 0.5 / std::sqrt(n));
  CHECK(s.std[0] == doctest::Approx(3.0).epsilon(0.01));
  CHECK(s.std[1] == doctest::Approx(0.5).epsilon(0.01));

  auto x = torch::randn({2, 3, 5, 4, 4}, torch::kFloat64);
  auto back = s.denormalize(s.normalize(x, 1), 1);
  CHECK(torch::allclose(back, x, 1e-12, 1e-12));
  auto tail = torch::randn({3, 1, 2});
  CHECK(torch::allclose(s.normalize(tail, 1, 2), (tail - s.mean[2]) / s.std[2]));
}

TEST_CASE("sequences: window count, shapes and shards") {
  for (std::int64_t n : {25, 26, 27, 40}) {
    auto store = constant_store(4, 8, n, 3.0f, 1.0f);
    auto stats = compute_norm_stats(store, full_range(store));
    auto seq = make_sequences(store, stats, 6, 20);
    CHECK(seq.size() == std::max<std::int64_t>(0, n - 6 - 20 + 1));
  }
  auto store = constant_store(4, 8, 40, 3.0f, 1.0f);
  auto stats = compute_norm_stats(store, full_range(store));
  auto seq = make_sequences(store, stats, 2, 3);
  REQUIRE(seq.size() == 36);
  auto s = seq[5];
  CHECK(s.history.sizes() == torch::IntArrayRef{3, 2, 4, 8});
  CHECK(s.target.sizes() == torch::IntArrayRef{2, 3, 4, 8});
  CHECK(s.history.is_contiguous());
  CHECK(s.init_time == store.axis().at(6));
  // Target frame 0 of window w is the frame after its last history frame.
  auto raw = store.frames(std::vector<std::size_t>{1}, 7, 1).to(torch::kFloat64);
  auto expect = (raw - stats.mean[1]) / stats.std[1];
  CHECK(torch::allclose(s.target[1][0].to(torch::kFloat64), expect[0][0], 1e-5, 1e-5));
  CHECK(torch::equal(seq[6].history.narrow(0, 0, 2).select(1, 1), s.target.select(1, 0)));

  std::vector<std::int64_t> idx{0, 3, 9};
  auto [h, t] = seq.batch(idx);
  CHECK(h.sizes() == torch::IntArrayRef{3, 3, 2, 4, 8});
  CHECK(t.sizes() == torch::IntArrayRef{3, 2, 3, 4, 8});
  CHECK(torch::equal(h[1], seq[3].history));

  std::int64_t covered = 0, prev = 0;
  for (std::int64_t k = 0; k < 5; ++k) {
    auto [lo, hi] = seq.shard(k, 5);
    CHECK(lo == prev);
    covered += hi - lo;
    prev = hi;
  }
  CHECK(covered == seq.size());
  CHECK(make_sequences(store, stats, 2, 3, 5).size() == 8);
}

TEST_CASE("climatology: constant field, single year and annual cycle") {
  auto store = constant_store(2, 4, 4 * 365, 7.0f, 0.0f, true);
  auto clim = weekly_climatology(store, TimeRange::years(2015, 2015));
  CHECK(clim.fields.sizes() == torch::IntArrayRef{52, 3, 2, 4});
  CHECK(torch::allclose(clim.fields.select(1, 0), torch::full({52, 2, 4}, 7.0f)));
  CHECK(std::accumulate(clim.counts.begin(), clim.counts.end(), std::int64_t{0}) == 4 * 365);

  // One year of data: each week's climatology equals that week's mean.
  auto toy = synth_toy(ToyKind::kAnnualCycle, GridSpec::regular(2, 4), 4 * 366, 5);
  const auto year2000 = TimeRange::years(2000, 2000);
  auto c = weekly_climatology(toy.store, year2000);
  const auto week = climatology_week_index(make_time(2000, 3, 15));
  torch::Tensor sum = torch::zeros({2, 4}, torch::kFloat64);
  int count = 0;
  for (std::int64_t t = 0; t < toy.store.n_times(); ++t) {
    if (climatology_week_index(toy.store.axis().at(t)) != week) continue;
    sum += toy.store.frames(std::vector<std::size_t>{0}, t, 1)[0][0].to(torch::kFloat64);
    ++count;
  }
  CHECK(count == c.counts[static_cast<std::size_t>(week)]);
  CHECK(torch::allclose(c.fields[week][0].to(torch::kFloat64), sum / count, 1e-4, 1e-4));

  auto weekly_mean = c.fields.select(1, 0).mean({1, 2});
  const auto peak = weekly_mean.argmax().item<std::int64_t>();
  CHECK(peak >= 24);
  CHECK(peak <= 27);
  CHECK(torch::equal(c.for_time(make_time(2000, 12, 31)), c.fields[51]));

  auto again = weekly_climatology(toy.store, year2000);
  CHECK(torch::equal(again.fields, c.fields));

  auto stats = compute_norm_stats(toy.store, year2000);
  auto normed = weekly_climatology(toy.store, year2000, &stats);
  CHECK(torch::allclose(normed.fields, stats.normalize(c.fields.to(torch::kFloat64), 1).to(torch::kFloat32), 1e-4,
                        1e-4));
  CHECK_THROWS_AS(weekly_climatology(toy.store, TimeRange{make_time(2000, 1, 1), make_time(2000, 3, 1)}),
                  PreconditionError);
}

TEST_CASE("synthetic toys") {
  const auto grid = GridSpec::regular(4, 8);
  ToyOptions still;
  still.velocity = 0;
  auto a0 = synth_toy(ToyKind::kAdvection, grid, 5, 1, still);
  auto f = a0.store.frames(std::vector<std::size_t>{0, 1}, 0, 5);
  for (int t = 1; t < 5; ++t) CHECK(torch::equal(f.select(1, t), f.select(1, 0)));

  auto a1 = synth_toy(ToyKind::kAdvection, grid, 5, 1);
  auto g = a1.store.frames(std::vector<std::size_t>{0, 1}, 0, 5);
  for (int t = 1; t < 5; ++t) CHECK(torch::equal(g.select(1, t), torch::roll(g.select(1, 0), t, -1)));
  CHECK(torch::equal(a1.store.frames(std::vector<std::size_t>{0}, 0, 5),
                     synth_toy(ToyKind::kAdvection, grid, 5, 1).store.frames(std::vector<std::size_t>{0}, 0, 5)));
  CHECK_FALSE(torch::equal(g, synth_toy(ToyKind::kAdvection, grid, 5, 2).store.frames(
                                  std::vector<std::size_t>{0, 1}, 0, 5)));

  ToyOptions so;
  so.sequence_length = 3;
  so.history_length = 1;
  auto st = synth_toy(ToyKind::kStochasticAdvection, GridSpec::regular(2, 4), 3 * 10000, 9, so);
  REQUIRE(st.regimes.size() == 10000);
  const auto east = std::count(st.regimes.begin(), st.regimes.end(), 1);
  CHECK(std::abs(static_cast<double>(east) / 1e4 - 0.5) < 0.02);
  auto blk = st.store.frames(std::vector<std::size_t>{0}, 3 * 7, 3)[0];
  CHECK(torch::equal(blk[1], torch::roll(blk[0], st.regimes[7], -1)));
  CHECK(torch::equal(blk[2], torch::roll(blk[0], 2 * st.regimes[7], -1)));

  CHECK(parse_toy_kind(to_string(ToyKind::kAnnualCycle)) == ToyKind::kAnnualCycle);
  CHECK_THROWS_AS(parse_toy_kind("tornado"), ConfigError);
  ToyOptions bad;
  bad.sequence_length = 3;
  bad.history_length = 3;
  CHECK_THROWS_AS(synth_toy(ToyKind::kStochasticAdvection, grid, 6, 1, bad), ConfigError);
}

TEST_CASE("netcdf: classic and netcdf-4 readers agree with the writer") {
  const auto dir = scratch("nc");
  NcFile file;
  file.dims = {{"time", 2}, {"y", 3}};
  NcVar packed{"p", {"time", "y"}, NcType::kShort, {0, 10, 20, 30, -5, 40}, {{"units", "K"}},
               {{"scale_factor", 0.5}, {"add_offset", 100.0}, {"_FillValue", -5}}};
  NcVar plain{"d", {"y"}, NcType::kDouble, {1.5, -2.25, 1e10}, {}, {}};
  NcVar ints{"i", {"time"}, NcType::kInt, {7, -3}, {}, {}};
  file.vars = {packed, plain, ints};
  for (int kind : {1, 2, 4}) {
    CAPTURE(kind);
    const auto path = dir / ("f" + std::to_string(kind) + ".nc");
    if (kind == 4) {
      write_netcdf4(path, file);
    } else {
      write_classic(path, file, kind);
    }
    auto nc = NetcdfFile::open(path);
    CHECK(nc.variable("p").shape == std::vector<std::int64_t>{2, 3});
    if (kind != 4) CHECK(nc.variable("p").dims == std::vector<std::string>{"time", "y"});
    CHECK(nc.text_attribute("p", "units") == "K");
    auto p = nc.read_all("p");
    CHECK(p[0] == 100.0);
    CHECK(p[3] == 115.0);
    CHECK(std::isnan(p[4]));
    CHECK(p[5] == 120.0);
    auto rec = nc.read_record("p", 1);
    REQUIRE(rec.size() == 3);
    CHECK(rec[0] == 115.0f);
    CHECK(nc.read_all("d") == std::vector<double>{1.5, -2.25, 1e10});
    CHECK(nc.read_all("i") == std::vector<double>{7, -3});
    CHECK(nc.find("missing") == nullptr);
    CHECK_THROWS(nc.variable("missing"));
  }
  std::ofstream(dir / "junk.nc") << "not a netcdf file";
  CHECK_THROWS_AS(NetcdfFile::open(dir / "junk.nc"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("archive: WeatherBench layout loads and caches") {
  for (bool nc4 : {false, true}) {
    CAPTURE(nc4);
    const auto root = scratch(nc4 ? "arch4" : "arch3");
    ToyArchiveSpec spec;
    spec.netcdf4 = nc4;
    write_toy_archive(root / "data", spec);
    auto store = load_archive(root / "data", VariableCatalog::toy(), 2015, 2016);
    CHECK(store.n_times() == 2924);
    CHECK(store.axis().start == make_time(2015, 1, 1));
    CHECK(store.grid().same_geometry(GridSpec::regular(4, 8)));
    for (std::int64_t t : {0, 1459, 1460, 2923}) {
      for (int c = 0; c < 2; ++c) {
        auto v = store.field(static_cast<std::size_t>(c), t);
        CHECK(v[2 * 8 + 5] == static_cast<float>(toy_archive_value(c, t, 2, 5)));
      }
    }
    CHECK(store.field(2, 100)[1] == 1.0f);
    CHECK(load_archive(root / "data", VariableCatalog::toy(), 2016, 2016).n_times() == 1464);

    const auto train = TimeRange::years(2015, 2015);
    const auto cache = root / "cache";
    CHECK_FALSE(cache_exists(cache));
    auto made = consolidate_archive(root / "data", VariableCatalog::toy(), 2015, 2016, train, cache);
    CHECK(cache_exists(cache));
    auto opened = open_cache(cache);
    CHECK(opened.store.n_times() == store.n_times());
    auto direct = compute_norm_stats(store, train);
    for (int c = 0; c < 3; ++c) {
      CHECK(opened.stats.mean[c] == doctest::Approx(direct.mean[c]).epsilon(1e-9));
      CHECK(opened.stats.std[c] == doctest::Approx(direct.std[c]).epsilon(1e-9));
    }
    std::vector<std::size_t> all{0, 1, 2};
    CHECK(torch::equal(opened.store.frames(all, 1000, 3), store.frames(all, 1000, 3)));
    CHECK(torch::equal(made.store.frames(all, 5, 2), store.frames(all, 5, 2)));

    // Failure modes.
    CHECK_THROWS_AS(load_archive(root / "data", VariableCatalog::toy(), 2017, 2017), CatalogMismatch);
    VariableCatalog extra({{"tracer_a", VariableKind::kTwoD, {}, "a"}, {"tracer_c", VariableKind::kTwoD, {}, "c"}});
    try {
      load_archive(root / "data", extra, 2015, 2016);
      FAIL("expected CatalogMismatch");
    } catch (const CatalogMismatch& e) {
      CHECK(std::string(e.what()).find("tracer_c") != std::string::npos);
    }
    CHECK_THROWS_AS(load_archive(root / "none", VariableCatalog::toy(), 2015, 2016), IoError);
    CHECK_THROWS_AS(open_cache(root / "none"), IoError);
    fs::remove_all(root);
  }
}

TEST_CASE("archive: grid mismatch, non-finite values and missing levels") {
  const auto root = scratch("bad");
  ToyArchiveSpec spec;
  spec.last_year = 2015;
  write_toy_archive(root, spec);
  {
    ToyArchiveSpec other = spec;
    other.n_lat = 2;
    const auto alt = scratch("bad_alt");
    write_toy_archive(alt, other);
    fs::copy_file(alt / "tracer_b" / "tracer_b_2015.nc", root / "tracer_b" / "tracer_b_2015.nc",
                  fs::copy_options::overwrite_existing);
    fs::remove_all(alt);
  }
  CHECK_THROWS_AS(load_archive(root, VariableCatalog::toy(), 2015, 2015), GeometryError);

  fs::remove_all(root);
  write_toy_archive(root, spec);
  NcFile f;
  const auto grid = GridSpec::regular(4, 8);
  f.dims = {{"time", 4}, {"lat", 4}, {"lon", 8}};
  f.vars.push_back({"lat", {"lat"}, NcType::kDouble, grid.lat_deg, {}, {}});
  f.vars.push_back({"lon", {"lon"}, NcType::kDouble, grid.lon_deg, {}, {}});
  f.vars.push_back({"time", {"time"}, NcType::kDouble, {0, 6, 12, 18}, {{"units", "hours since 2015-01-01"}}, {}});
  std::vector<double> v(4 * 32, 1.0);
  v[40] = -999.0;
  f.vars.push_back({"a", {"time", "lat", "lon"}, NcType::kFloat, v, {}, {{"_FillValue", -999.0}}});
  write_classic(root / "tracer_a" / "tracer_a_2015.nc", f);
  fs::remove(root / "tracer_b" / "tracer_b_2015.nc");
  f.vars.back().name = "b";
  f.vars.back().num_attrs.clear();
  write_classic(root / "tracer_b" / "tracer_b_2015.nc", f);
  CHECK_THROWS_AS(load_archive(root, VariableCatalog::toy(), 2015, 2015), IoError);

  // A 3D variable whose file lacks one catalog level.
  fs::remove_all(root);
  write_toy_archive(root, spec);
  NcFile g;
  g.dims = {{"time", 4}, {"level", 2}, {"lat", 4}, {"lon", 8}};
  g.vars.push_back({"lat", {"lat"}, NcType::kDouble, grid.lat_deg, {}, {}});
  g.vars.push_back({"lon", {"lon"}, NcType::kDouble, grid.lon_deg, {}, {}});
  g.vars.push_back({"level", {"level"}, NcType::kInt, {500, 850}, {}, {}});
  g.vars.push_back({"time", {"time"}, NcType::kDouble, {0, 6, 12, 18}, {{"units", "hours since 2015-01-01"}}, {}});
  g.vars.push_back({"z", {"time", "level", "lat", "lon"}, NcType::kFloat, std::vector<double>(4 * 2 * 32, 3.0), {}, {}});
  fs::create_directories(root / "geopotential");
  write_classic(root / "geopotential" / "z.nc", g);
  VariableCatalog with_z({{"geopotential", VariableKind::kThreeD, {500, 850}, "z"}});
  auto z = load_archive(root, with_z, 2015, 2015);
  CHECK(z.n_channels() == 2);
  CHECK(z.n_times() == 4);
  VariableCatalog want_700({{"geopotential", VariableKind::kThreeD, {500, 700}, "z"}});
  try {
    load_archive(root, want_700, 2015, 2015);
    FAIL("expected CatalogMismatch");
  } catch (const CatalogMismatch& e) {
    CHECK(std::string(e.what()).find("geopotential@700hPa") != std::string::npos);
  }
  fs::remove_all(root);
}
