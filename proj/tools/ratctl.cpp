#include <iostream>

#include "rat/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rat::dispatch(args, std::cout, std::cerr);
}
