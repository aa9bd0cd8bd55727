#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace flevr {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent sub-seeds from (seed, tag) pairs
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix_seed(mix_seed(seed) ^ mix_seed(tag * 0x9e3779b97f4a7c15ull + 1));
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return sub_seed(sub_seed(seed, a), b);
}

double normal_cdf(double x);

// average ranks (1-based), ties share the mean rank of their block
std::vector<double> average_ranks(const std::vector<double>& x);

// Spearman rank correlation with average ranks; 0 if either side is constant
double spearman(const std::vector<double>& x, const std::vector<double>& y);

double mean(const std::vector<double>& x);

int max_threads();
void set_max_threads(int n);

// runs fn(0..count-1), possibly on several threads; each index must only touch
// its own output slot.  Nested calls run serially so seeding stays deterministic.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace flevr
