#include <iostream>

#include "gsnet_cli/commands.hpp"

int main(int argc, char** argv) { return gsnet::cli::run_cli(argc, argv, std::cout, std::cerr); }
