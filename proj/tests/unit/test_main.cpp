#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "casenbr/log.hpp"

int main(int argc, char** argv) {
  casenbr::log::set_level(casenbr::log::Level::warn);
  doctest::Context context(argc, argv);
  return context.run();
}
