// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "tcmgc/runtime.hpp"

int main(int argc, char** argv) {
  tcmgc::retain_freed_memory();
  std::vector<std::string> args(argv + 1, argv + argc);
  return tcmgc::cli::run(args, std::cout, std::cerr);
}
