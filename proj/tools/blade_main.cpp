#include <iostream>

#include "blade/cli.hpp"

int main(int argc, char** argv) { return blade::cli::run_cli(argc, argv, std::cout, std::cerr); }
