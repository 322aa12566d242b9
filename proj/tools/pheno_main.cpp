#include <string>
#include <vector>

#include "pheno/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pheno::cli::run(std::move(args));
}
