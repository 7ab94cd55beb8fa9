#include <iostream>
#include <string>
#include <vector>

#include "sfl_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sfl::cli::cli_run(args, std::cout, std::cerr);
}
