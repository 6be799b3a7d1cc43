#include <iostream>

#include "mcam/cli.hpp"

int main(int argc, char** argv) {
    return mcam::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
