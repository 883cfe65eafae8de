#include "swinvrnn/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Smooth field periodic in longitude, stored row-major [n_lat, n_lon].
std::vector<float> random_pattern(std::size_t n_lat, std::size_t n_lon, int n_modes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  std::uniform_int_distribution<int> zonal(1, std::max<int>(1, static_cast<int>(n_lon / 4)));
  std::uniform_int_distribution<int> meridional(0, 2);
  std::vector<float> out(n_lat * n_lon, 0.0f);
  for (int m = 0; m < n_modes; ++m) {
    const double a = amp(rng);
    const int k = zonal(rng);
    const int l = meridional(rng);
    const double phi = phase(rng);
    const double psi = phase(rng);
    for (std::size_t j = 0; j < n_lat; ++j) {
      const double y = (static_cast<double>(j) + 0.5) / static_cast<double>(n_lat);
      const double meridional_shape = std::cos(std::numbers::pi * l * y + psi);
      for (std::size_t i = 0; i < n_lon; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(n_lon);
        out[j * n_lon + i] += static_cast<float>(a * std::cos(kTwoPi * k * x + phi) * meridional_shape);
      }
    }
  }
  return out;
}

// Writes `pattern` rolled eastward by `shift` columns into `dst`.
void write_rolled(const std::vector<float>& pattern, std::size_t n_lat, std::size_t n_lon, std::int64_t shift,
                  float* dst) {
  const auto n = static_cast<std::int64_t>(n_lon);
  for (std::size_t j = 0; j < n_lat; ++j) {
    for (std::int64_t i = 0; i < n; ++i) {
      const auto src = ((i - shift) % n + n) % n;
      dst[j * n_lon + static_cast<std::size_t>(i)] = pattern[j * n_lon + static_cast<std::size_t>(src)];
    }
  }
}

std::vector<float> binary_mask(std::size_t cells, std::mt19937_64& rng) {
  std::bernoulli_distribution land(0.3);
  std::vector<float> out(cells);
  for (auto& v : out) v = land(rng) ? 1.0f : 0.0f;
  return out;
}

}  // namespace

ToyKind parse_toy_kind(const std::string& text) {
  if (text == "advection") return ToyKind::kAdvection;
  if (text == "stochastic-advection") return ToyKind::kStochasticAdvection;
  if (text == "annual-cycle") return ToyKind::kAnnualCycle;
  throw ConfigError("unknown toy data kind '" + text + "'");
}

const char* to_string(ToyKind kind) {
  switch (kind) {
    case ToyKind::kAdvection: return "advection";
    case ToyKind::kStochasticAdvection: return "stochastic-advection";
    case ToyKind::kAnnualCycle: return "annual-cycle";
  }
  return "?";
}

TimePoint synthetic_epoch() { return make_time(2000, 1, 1); }

double annual_cycle_signal(TimePoint t) {
  const double days = std::chrono::duration<double, std::ratio<86400>>(t - make_time(2000, 7, 1)).count();
  return std::cos(kTwoPi * days / 365.2425);
}

SyntheticArchive synth_toy(ToyKind kind, const GridSpec& grid, std::int64_t n_steps, std::uint64_t seed,
                           const ToyOptions& options) {
  if (n_steps < 1) throw ConfigError("synthetic archive needs at least one step");
  grid.validate();
  const auto n_lat = grid.n_lat();
  const auto n_lon = grid.n_lon();
  const auto hw = n_lat * n_lon;
  const auto steps = static_cast<std::size_t>(n_steps);
  std::mt19937_64 rng(seed);

  SyntheticArchive out;
  std::vector<std::vector<float>> channels(3);
  channels[0].resize(steps * hw);
  channels[1].resize(steps * hw);

  switch (kind) {
    case ToyKind::kAdvection: {
      const auto pa = random_pattern(n_lat, n_lon, options.n_modes, rng);
      const auto pb = random_pattern(n_lat, n_lon, options.n_modes, rng);
      for (std::size_t t = 0; t < steps; ++t) {
        const auto shift = static_cast<std::int64_t>(options.velocity) * static_cast<std::int64_t>(t);
        write_rolled(pa, n_lat, n_lon, shift, channels[0].data() + t * hw);
        write_rolled(pb, n_lat, n_lon, shift, channels[1].data() + t * hw);
      }
      break;
    }
    case ToyKind::kStochasticAdvection: {
      if (options.history_length < 1 || options.sequence_length <= options.history_length) {
        throw ConfigError("stochastic advection needs 1 <= history_length < sequence_length");
      }
      out.sequence_length = options.sequence_length;
      std::bernoulli_distribution east(0.5);
      const auto block = static_cast<std::size_t>(options.sequence_length);
      for (std::size_t start = 0; start < steps; start += block) {
        const int regime = east(rng) ? 1 : -1;
        out.regimes.push_back(regime);
        const auto pa = random_pattern(n_lat, n_lon, options.n_modes, rng);
        const auto pb = random_pattern(n_lat, n_lon, options.n_modes, rng);
        for (std::size_t k = 0; k < block && start + k < steps; ++k) {
          const auto lead = static_cast<std::int64_t>(k) - options.history_length + 1;
          const std::int64_t shift = lead > 0 ? regime * lead : 0;
          write_rolled(pa, n_lat, n_lon, shift, channels[0].data() + (start + k) * hw);
          write_rolled(pb, n_lat, n_lon, shift, channels[1].data() + (start + k) * hw);
        }
      }
      break;
    }
    case ToyKind::kAnnualCycle: {
      const auto pa = random_pattern(n_lat, n_lon, options.n_modes, rng);
      const auto pb = random_pattern(n_lat, n_lon, options.n_modes, rng);
      const auto epoch = synthetic_epoch();
      for (std::size_t t = 0; t < steps; ++t) {
        const double s = annual_cycle_signal(epoch + std::chrono::hours{6 * static_cast<std::int64_t>(t)});
        for (std::size_t i = 0; i < hw; ++i) {
          channels[0][t * hw + i] = static_cast<float>(280.0 + 10.0 * s + pa[i]);
          channels[1][t * hw + i] = static_cast<float>(-3.0 * s + pb[i]);
        }
      }
      break;
    }
  }
  channels[2] = binary_mask(hw, rng);

  TimeAxis axis{synthetic_epoch(), 6, n_steps};
  out.store = FieldStore::from_buffers(VariableCatalog::toy(), grid, axis, std::move(channels));
  return out;
}

}  // namespace swinvrnn
