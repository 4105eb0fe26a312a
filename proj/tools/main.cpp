#include <iostream>

#include "stereosparse/cli.hpp"

int main(int argc, char** argv) {
    return stereosparse::run_cli(argc, argv, std::cout, std::cerr);
}
