// Apache License, Version 2.0, refer to LICENSE.txt

#include "dpgp/rng.hpp"

namespace dpgp {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(seed);
  for (auto t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ull));
  return h;
}

Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  const std::uint64_t k = stream_key(seed, tags);
  std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  return Rng(seq);
}

double draw_gamma(Rng& rng, double shape, double scale) {
  std::gamma_distribution<double> g(shape, scale);
  return g(rng);
}

}  // namespace dpgp
