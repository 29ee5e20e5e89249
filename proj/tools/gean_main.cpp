#include <iostream>

#include "gean/cli.hpp"

int main(int argc, char** argv) { return gean::run_cli(argc, argv, std::cout, std::cerr); }
