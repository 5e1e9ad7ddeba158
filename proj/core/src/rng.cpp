#include "mlatmi/rng.hpp"

#include <cmath>
#include <numbers>

namespace mlatmi {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

CounterRng CounterRng::derive(std::string_view name) const {
  return CounterRng(mix64(key_ ^ hash_string(name)) + 0x632be59bd9b4e019ULL);
}

CounterRng CounterRng::derive(std::uint64_t index) const {
  return CounterRng(mix64(key_ + mix64(index ^ 0xd1b54a32d192ed03ULL)));
}

std::uint64_t CounterRng::bits(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                               std::uint64_t d) const {
  std::uint64_t h = mix64(key_ ^ 0x9e3779b97f4a7c15ULL);
  h = mix64(h + a * 0xa0761d6478bd642fULL);
  h = mix64(h + b * 0xe7037ed1a0b428dbULL);
  h = mix64(h + c * 0x8ebc6af09c88c6e3ULL);
  h = mix64(h + d * 0x589965cc75374cc3ULL);
  return h;
}

double CounterRng::uniform(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                           std::uint64_t d) const {
  return static_cast<double>(bits(a, b, c, d) >> 11) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
  const double u1 = uniform(a, b, c, 0);
  const double u2 = uniform(a, b, c, 1);
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t n, std::uint64_t a, std::uint64_t b,
                                std::uint64_t c) const {
  // Lemire's multiply-shift; bias is below 2^-64 * n and irrelevant here.
  const unsigned __int128 wide = static_cast<unsigned __int128>(bits(a, b, c, 7)) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

}  // namespace mlatmi
