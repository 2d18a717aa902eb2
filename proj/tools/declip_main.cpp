#include <vector>

#include "declip/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return declip::cli::run(std::move(args));
}
