// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <filesystem>

namespace tcmgc::testing {

std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tcmgc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace tcmgc::testing
