#include "swinvrnn/noise.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include "swinvrnn/errors.hpp"

namespace swinvrnn {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix_seed(seed);
  for (auto p : path) h = mix_seed(h ^ mix_seed(p));
  return h;
}

NoiseStreams::NoiseStreams(std::uint64_t seed, std::vector<std::int64_t> members)
    : seed_(seed), members_(std::move(members)) {
  if (members_.empty()) throw PreconditionError("noise streams need at least one member");
}

NoiseStreams NoiseStreams::for_batch(std::uint64_t seed, std::int64_t batch) {
  std::vector<std::int64_t> members(static_cast<std::size_t>(batch));
  for (std::int64_t b = 0; b < batch; ++b) members[b] = b;
  return NoiseStreams(seed, std::move(members));
}

NoiseStreams NoiseStreams::subset(std::int64_t first, std::int64_t count) const {
  if (first < 0 || count < 1 || first + count > batch()) throw PreconditionError("noise stream subset out of range");
  return NoiseStreams(seed_, {members_.begin() + first, members_.begin() + first + count});
}

at::Generator NoiseStreams::generator(NoiseTag tag, std::int64_t member, std::int64_t step, std::int64_t slot) const {
  return at::make_generator<at::CPUGeneratorImpl>(
      derive_seed(seed_, {static_cast<std::uint64_t>(tag), static_cast<std::uint64_t>(member),
                          static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(slot)}));
}

torch::Tensor NoiseStreams::normal(NoiseTag tag, std::int64_t step, torch::IntArrayRef shape, torch::ScalarType dtype,
                                   std::int64_t slot) const {
  std::vector<torch::Tensor> rows;
  rows.reserve(members_.size());
  for (auto m : members_) {
    // Drawn in float64 and rounded so float32 and float64 models see the same noise.
    rows.push_back(torch::randn(shape, generator(tag, m, step, slot), torch::kFloat64).to(dtype));
  }
  return torch::stack(rows);
}

torch::Tensor NoiseStreams::uniform(NoiseTag tag, std::int64_t step, torch::IntArrayRef shape, torch::ScalarType dtype,
                                    std::int64_t slot) const {
  std::vector<torch::Tensor> rows;
  rows.reserve(members_.size());
  for (auto m : members_) {
    rows.push_back(torch::rand(shape, generator(tag, m, step, slot), torch::kFloat64).to(dtype));
  }
  return torch::stack(rows);
}

}  // namespace swinvrnn
