#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "twophase/mesh.hpp"

namespace twophase::fixtures {

inline NodalField<double> random_density(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  NodalField<double> theta(n);
  for (Eigen::Index i = 0; i < n; ++i) theta[i] = dist(gen);
  return theta;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("twophase_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace twophase::fixtures
