#include <iostream>

#include "fedseg/cli/commands.hpp"

int main(int argc, char** argv) { return fedseg::cli::run_cli(argc, argv, std::cout, std::cerr); }
