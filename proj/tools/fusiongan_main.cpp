#include <iostream>

#include "fusiongan/cli.hpp"

int main(int argc, char** argv) { return fgan::run_cli(argc, argv, std::cout, std::cerr); }
