#include <iostream>

#include "certsynth/cli.hpp"

int main(int argc, char** argv) { return certsynth::run_cli(argc, argv, std::cout, std::cerr); }
