#include "hjbppo/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace hjbppo {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

RngStream RngStream::spawn(std::uint64_t salt) const {
  RngStream copy = *this;  // do not consume our own state
  std::uint64_t base = copy.next_u64();
  return RngStream(mix_seed(base ^ mix_seed(salt)));
}

double RngStream::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
  // Box-Muller without the cached second variate.
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string RngStream::serialize() const {
  std::ostringstream os;
  os << gen_;
  return os.str();
}

void RngStream::deserialize(const std::string& text) {
  std::istringstream is(text);
  std::mt19937_64 parsed;
  if (!(is >> parsed)) {
    throw std::invalid_argument("RngStream::deserialize: malformed state text");
  }
  gen_ = parsed;
}

}  // namespace hjbppo
