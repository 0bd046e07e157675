#include <vector>

#include "skdf/cli.hpp"

int main(int argc, char** argv) {
  return skdf::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
