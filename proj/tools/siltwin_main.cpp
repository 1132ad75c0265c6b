#include <iostream>
#include <string>
#include <vector>

#include "siltwin/cli/cli.hpp"

int main(int argc, char** argv) {
    return siltwin::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout,
                                  std::cerr);
}
