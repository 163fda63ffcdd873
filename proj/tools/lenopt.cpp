#include <iostream>
#include <string>
#include <vector>

#include "lenopt/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lenopt::cli::run_cli(args, std::cout, std::cerr);
}
