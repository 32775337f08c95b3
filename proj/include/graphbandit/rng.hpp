#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace graphbandit {

// Counter-based generator. The stream is a pure function of
// (seed, tag, index); draw n is splitmix64(key + n * golden).
class KeyedRng {
 public:
  using result_type = std::uint64_t;

  KeyedRng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  // Uniform on [0, 1).
  double uniform();
  // Standard normal (Box-Muller, both variates used).
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_tag(std::string_view tag);

// Seed for a sub-task, e.g. one repeat of an experiment.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index);

}  // namespace graphbandit
