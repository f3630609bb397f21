#include <iostream>
#include <string>
#include <vector>

#include "synthpii/cli.hpp"

int main(int argc, char **argv) {
    std::vector<std::string> args(argv, argv + argc);
    return synthpii::cli::run(args, std::cout, std::cerr);
}
