#include <string>
#include <vector>

#include "hoidet/cli.hpp"

int main(int argc, char** argv) {
  return hoidet::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
