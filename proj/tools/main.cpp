#include <iostream>
#include <string>
#include <vector>

#include "progfuse/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return progfuse::cli::run(args, std::cout, std::cerr);
}
