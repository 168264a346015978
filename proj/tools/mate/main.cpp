#include <iostream>

#include "mate/cli/commands.hpp"

int main(int argc, char** argv) { return mate::cli::run_command(argc, argv, std::cout, std::cerr); }
