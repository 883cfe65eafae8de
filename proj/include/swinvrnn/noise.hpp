#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include <torch/torch.h>

namespace swinvrnn {

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// What a draw is used for; keeps streams of different consumers apart.
enum class NoiseTag : std::uint64_t {
  kInputNoise = 1,
  kDropout = 2,
  kLatent = 3,
  kTeacherForcing = 4,
};

// Random draws for a batch whose row b belongs to member `members[b]`. Each
// (seed, member, step, tag, slot) has its own generator, so a member's draws do
// not depend on which other members share the batch.
class NoiseStreams {
 public:
  NoiseStreams(std::uint64_t seed, std::vector<std::int64_t> members);
  // Rows 0..batch-1 as members.
  static NoiseStreams for_batch(std::uint64_t seed, std::int64_t batch);

  std::int64_t batch() const { return static_cast<std::int64_t>(members_.size()); }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::int64_t>& members() const { return members_; }
  NoiseStreams subset(std::int64_t first, std::int64_t count) const;

  // [batch, shape...] standard normal.
  torch::Tensor normal(NoiseTag tag, std::int64_t step, torch::IntArrayRef shape, torch::ScalarType dtype,
                       std::int64_t slot = 0) const;
  // [batch, shape...] uniform on [0, 1).
  torch::Tensor uniform(NoiseTag tag, std::int64_t step, torch::IntArrayRef shape, torch::ScalarType dtype,
                        std::int64_t slot = 0) const;

 private:
  at::Generator generator(NoiseTag tag, std::int64_t member, std::int64_t step, std::int64_t slot) const;

  std::uint64_t seed_;
  std::vector<std::int64_t> members_;
};

}  // namespace swinvrnn
