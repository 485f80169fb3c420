#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace vgidm::testing {

/// Compares values against tests/golden/<name>.json. With VGIDM_UPDATE_GOLDEN=1 the file is (re)written instead.
inline void expect_golden(const std::string& name, const std::vector<double>& values, double tol = 1e-12) {
  const std::filesystem::path path = std::filesystem::path(VGIDM_GOLDEN_DIR) / (name + ".json");
  const char* update = std::getenv("VGIDM_UPDATE_GOLDEN");
  if (update && std::string(update) == "1") {
    std::ofstream os(path);
    nlohmann::json j = values;
    os << j.dump(1) << '\n';
    return;
  }
  std::ifstream is(path);
  ASSERT_TRUE(is) << "missing golden file " << path << "; run with VGIDM_UPDATE_GOLDEN=1 once";
  const auto want = nlohmann::json::parse(is).get<std::vector<double>>();
  ASSERT_EQ(want.size(), values.size()) << name;
  for (std::size_t i = 0; i < values.size(); ++i) EXPECT_NEAR(values[i], want[i], tol) << name << "[" << i << "]";
}

}  // namespace vgidm::testing
