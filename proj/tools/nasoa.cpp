#include <iostream>
#include <string>
#include <vector>

#include "nasoa/cli.h"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return nasoa::cli::run(args, std::cout, std::cerr);
}
