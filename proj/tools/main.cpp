#include <iostream>

#include "vinslab/cli.hpp"
#include "vinslab/runtime.hpp"

int main(int argc, char** argv) {
  vinslab::tune_allocator();
  return vinslab::run_cli(argc, argv, std::cout, std::cerr);
}
