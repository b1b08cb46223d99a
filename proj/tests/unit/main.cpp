#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "vinslab/runtime.hpp"

int main(int argc, char** argv) {
  vinslab::tune_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
