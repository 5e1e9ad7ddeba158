#pragma once

#include <cstdint>
#include <string_view>

namespace mlatmi {

// Counter-based random streams. Every draw is a pure function of
// (key, counters), so generation order and thread count never change results.
class CounterRng {
 public:
  constexpr CounterRng() = default;
  explicit constexpr CounterRng(std::uint64_t key) : key_(key) {}

  // Sub-stream keyed by name, e.g. CounterRng(master).derive("measure").
  CounterRng derive(std::string_view name) const;
  CounterRng derive(std::uint64_t index) const;

  std::uint64_t bits(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                     std::uint64_t d = 0) const;

  // Uniform in [0, 1).
  double uniform(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                 std::uint64_t d = 0) const;

  // Standard normal (Box-Muller over two lanes of the same counter).
  double normal(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const;

  // Uniform integer in [0, n), n > 0.
  std::uint64_t below(std::uint64_t n, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) const;

  constexpr std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_ = 0x9e3779b97f4a7c15ULL;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view s);

}  // namespace mlatmi
