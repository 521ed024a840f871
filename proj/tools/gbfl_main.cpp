#include <iostream>

#include "gbfl/cli.hpp"

int main(int argc, char** argv) {
  return gbfl::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
