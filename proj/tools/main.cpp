#include <iostream>
#include <string>
#include <vector>

#include "popscope/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return popscope::cli_dispatch(args, std::cout, std::cerr);
}
