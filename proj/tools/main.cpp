#include <string>
#include <vector>

#include "rbmchoice/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rbmchoice::cli_main(args);
}
