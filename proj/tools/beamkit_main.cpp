#include <vector>

#include "beamkit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return beamkit::cli::run(args);
}
