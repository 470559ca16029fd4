#include <string>
#include <vector>

#include "rbsde/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rbsde::run_cli(args);
}
