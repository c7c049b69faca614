#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>

namespace hjbppo {

// Deterministic random stream. Gaussian draws use a non-caching Box-Muller so
// the mt19937_64 state is the whole story: serializing the engine mid-run and
// restoring it reproduces the exact remaining sequence, which checkpoint
// resume relies on.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  // Child stream with an independent, seed-derived state. Used to give env
  // resets, action sampling, minibatch shuffling and weight init their own
  // streams so consuming one never perturbs the others.
  RngStream spawn(std::uint64_t salt) const;

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal.
  double normal();

  std::string serialize() const;
  void deserialize(const std::string& text);

  bool operator==(const RngStream& other) const { return gen_ == other.gen_; }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 mixing step; used to derive stream seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace hjbppo
