#include <iostream>

#include "calav/cli.hpp"

int main(int argc, char** argv) { return calav::run_cli(argc, argv, std::cout, std::cerr); }
