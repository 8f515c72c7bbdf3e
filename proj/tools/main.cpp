#include <iostream>
#include <string>
#include <vector>

#include "mal2gcn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mal2gcn::cli::run(args, std::cout, std::cerr);
}
