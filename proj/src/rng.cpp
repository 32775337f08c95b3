#include "graphbandit/rng.hpp"

#include <cmath>
#include <numbers>

namespace graphbandit {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  return mix64(mix64(seed + kGolden) ^ mix64(hash_tag(tag) + mix64(index + kGolden)));
}

KeyedRng::KeyedRng(std::uint64_t seed, std::string_view tag, std::uint64_t index)
    : key_(derive_seed(seed, tag, index)) {}

KeyedRng::result_type KeyedRng::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double KeyedRng::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double KeyedRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

std::uint64_t KeyedRng::below(std::uint64_t n) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x = (*this)();
  while (x >= limit) x = (*this)();
  return x % n;
}

}  // namespace graphbandit
