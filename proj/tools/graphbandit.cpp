#include <iostream>

#include "graphbandit/cli.hpp"

int main(int argc, char** argv) { return graphbandit::run_cli(argc, argv, std::cout, std::cerr); }
