#include "cli_commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return switchsim::cli::cli_main(argc, argv, std::cout, std::cerr); }
