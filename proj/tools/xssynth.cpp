#include <iostream>

#include "xssynth/cli.hpp"

int main(int argc, char** argv) { return xssynth::run_cli(argc, argv, std::cout, std::cerr); }
