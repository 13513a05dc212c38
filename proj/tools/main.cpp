#include <iostream>

#include "divopt/cli.hpp"

int main(int argc, char** argv) { return divopt::cli::run(argc, argv, std::cout, std::cerr); }
