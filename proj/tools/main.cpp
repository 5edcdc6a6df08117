#include <iostream>

#include "patchgrasp/commands.h"

int main(int argc, char** argv) {
  return patchgrasp::runCli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
