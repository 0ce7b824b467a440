#include <iostream>

#include "memcal/cli.hpp"

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  return memcal::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
