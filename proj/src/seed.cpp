#include "fedsense/seed.hpp"

namespace fedsense {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view component,
                          std::initializer_list<std::uint64_t> indices) {
  std::uint64_t state = splitmix64(seed ^ fnv1a(component));
  for (std::uint64_t index : indices) {
    state = splitmix64(state ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  }
  return state;
}

}  // namespace fedsense
