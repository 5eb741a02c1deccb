#include <iostream>
#include <string>
#include <vector>

#include "infogan/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return infogan::run_cli(args, std::cout, std::cerr);
}
