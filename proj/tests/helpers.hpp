// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dpgp/core_model.hpp"
#include "dpgp/gp_field.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::path(DPGP_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline dpgp::Positions random_positions(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  dpgp::Positions p(n, 2);
  for (int i = 0; i < n; ++i) {
    p(i, 0) = u(rng);
    p(i, 1) = u(rng);
  }
  return p;
}

/// Frame whose vehicles follow v(x, y) at uniform random positions.
template <class Field>
dpgp::Frame field_frame(std::mt19937_64& rng, std::size_t id, int vehicles, Field field,
                        double lo = 0.0, double hi = 100.0, double noise_sd = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::normal_distribution<double> n(0.0, 1.0);
  dpgp::Frame f;
  f.frame_id = id;
  f.timestamp = 0.5 * static_cast<double>(id);
  for (int j = 0; j < vehicles; ++j) {
    const double x = u(rng);
    const double y = u(rng);
    const auto [vx, vy] = field(x, y);
    f.vehicles.push_back({x, y, vx + noise_sd * n(rng), vy + noise_sd * n(rng)});
  }
  return f;
}

}  // namespace testutil
