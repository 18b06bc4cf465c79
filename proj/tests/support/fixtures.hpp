#pragma once

#include "ctok/backbone.hpp"
#include "ctok/types.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fixtures {

inline ctok::Vec to_vec(const oracle::Vector& v) {
  ctok::Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

inline oracle::Vector to_std(const ctok::Vec& v) { return {v.data(), v.data() + v.size()}; }

inline const ctok::Backbone& toy() {
  static const ctok::Backbone bb = ctok::load_backbone(ctok::default_toy_spec());
  return bb;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ctok_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
