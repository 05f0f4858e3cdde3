#include "dstyle/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dstyle::run_cli(argc, argv, std::cout, std::cerr); }
